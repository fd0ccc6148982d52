#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unicorn/baselines.hpp"
#include "unicorn/learn.hpp"

namespace unicorn {

// One (network, flows) pair named by a config file. Paths are stored already
// resolved against the config file's directory.
struct ScenarioSpec {
  std::string name;
  std::string network_path;
  std::string flows_path;
  std::string difficulty;  // optional free-form tag (easy|medium|hard)
};

struct ExperimentConfig {
  std::vector<ScenarioSpec> scenarios;
  SimConfig sim;
  double horizon_s = 3600.0;
  ModelConfig model;  // caps left at zero are derived by scanning scenarios
  TrainConfig train;
  int eval_episodes = 10;
  std::string out_dir = "out";

  void validate() const;
};

// Parses the experiment JSON. Relative scenario paths get `base_dir`
// prepended. Top-level key "preset" selects canned signal timing:
// "resco" = 15 s decisions / 5 s yellow, "ma2c" = 10 s / 3 s; explicit
// "sim" fields override the preset. Unknown keys are errors.
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& base_dir);
// File variant; prefixes every error with the config path.
ExperimentConfig load_experiment_config(const std::string& path);

// Auto-computed registry stats: intersection arm histogram (by approach
// count), expected injected volume over the horizon, and the per-stream
// arrival-rate spread.
struct ScenarioStats {
  int total_intersections = 0;
  int arm2 = 0, arm3 = 0, arm4 = 0, arm_other = 0;
  double volume_veh = 0.0;
  double rate_mean = 0.0, rate_std = 0.0, rate_max = 0.0, rate_min = 0.0;
};

ScenarioStats scenario_stats(const Network& net, const FlowSpec& flows, double horizon_s);

struct LoadedScenario {
  ScenarioSpec spec;
  Network net;
  FlowSpec flows;
  ScenarioStats stats;
};

std::vector<LoadedScenario> load_scenarios(const ExperimentConfig& cfg);

extern const char* kRegistryCsvHeader;
std::string registry_csv_row(const LoadedScenario& s);

// Fills any zero cap in `base` from the scenarios' maxima.
ModelConfig derive_model_caps(ModelConfig base, const std::vector<LoadedScenario>& scenarios);

// Errors when any intersection exceeds the caps a checkpoint was built with.
void check_caps_compatible(const ModelConfig& caps,
                           const std::vector<LoadedScenario>& scenarios);

// Worker count for parallel episodes: min(jobs, hardware), further capped by
// the UNICORN_THREADS environment variable when set.
int effective_thread_count(int jobs);

struct RunOptions {
  std::string config_path;
  std::optional<unsigned long long> seed;  // overrides the config seed
  std::string out_dir;                     // overrides the config out_dir
  std::string controller = "fixed";        // baseline subcommand
  std::string checkpoint;                  // eval: manifest.json sits beside it
};

// Subcommand bodies. Each returns a process exit code: 0 only when every
// requested episode/iteration completed and all artifacts were written.
int cmd_train(const RunOptions& opt, std::ostream& log);
int cmd_eval(const RunOptions& opt, std::ostream& log);
int cmd_baseline(const RunOptions& opt, std::ostream& log);
int cmd_validate(const RunOptions& opt, std::ostream& log);

// Full argv-level entry point (subcommand dispatch + flag parsing).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace unicorn
