// Experiment runner: config parsing with timing presets, the scenario
// registry, caps derivation/compatibility, and the train/eval/baseline/
// validate subcommands end to end through the argv entry point.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "testutil.hpp"
#include "unicorn/checkpoint.hpp"
#include "unicorn/cli.hpp"
#include "unicorn/scenariogen.hpp"

using namespace unicorn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("unicorn_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& rel) const { return (path / rel).string(); }
};

void write_scenario_files(const TempDir& dir, const std::string& name, const Network& net,
                          const FlowSpec& flows) {
  write_text_file(dir.str(name + ".net.json"), serialize_network(net));
  write_text_file(dir.str(name + ".flows.json"), serialize_flows(flows));
}

// Tiny-model config JSON pointing at scenarios previously written into `dir`.
std::string tiny_config(const TempDir& dir, const std::vector<std::string>& scenario_names,
                        double horizon_s, int iterations, const std::string& out_rel,
                        int eval_episodes = 3) {
  json cfg;
  cfg["preset"] = "resco";
  cfg["horizon_s"] = horizon_s;
  cfg["seed"] = 5;
  cfg["eval_episodes"] = eval_episodes;
  cfg["out_dir"] = dir.str(out_rel);
  cfg["model"] = {{"d", 8}, {"d_vae", 4}};
  cfg["train"] = {{"iterations", iterations}, {"epochs", 2}};
  cfg["scenarios"] = json::array();
  for (const auto& name : scenario_names)
    cfg["scenarios"].push_back({{"name", name},
                                {"network", name + ".net.json"},
                                {"flows", name + ".flows.json"}});
  const std::string path = dir.str("config_" + out_rel + ".json");
  write_text_file(path, cfg.dump(2));
  return path;
}

FlowSpec two_stream_flows(double a_vpm, double b_vpm, double end_s) {
  FlowSpec f;
  f.rates.push_back({"in_a", "out_a", a_vpm, 0.0, end_s});
  f.rates.push_back({"in_b", "out_b", b_vpm, 0.0, end_s});
  return f;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

TEST_CASE("config parsing: presets, overrides, and strictness") {
  const std::string scen =
      R"(,"scenarios":[{"name":"s","network":"/tmp/none.net.json","flows":"/tmp/none.flows.json"}])";

  ExperimentConfig resco = parse_experiment_config(R"({"preset":"resco")" + scen + "}", "");
  CHECK(resco.sim.decision_interval_s == 15.0);
  CHECK(resco.sim.yellow_s == 5.0);

  ExperimentConfig ma2c = parse_experiment_config(R"({"preset":"ma2c")" + scen + "}", "");
  CHECK(ma2c.sim.decision_interval_s == 10.0);
  CHECK(ma2c.sim.yellow_s == 3.0);

  // Explicit sim fields override the preset; horizon checks use the result.
  ExperimentConfig mixed = parse_experiment_config(
      R"({"preset":"ma2c","sim":{"yellow_s":4.0},"horizon_s":40.0)" + scen + "}", "");
  CHECK(mixed.sim.decision_interval_s == 10.0);
  CHECK(mixed.sim.yellow_s == 4.0);
  CHECK(mixed.horizon_s == 40.0);
  CHECK(mixed.train.horizon_s == 40.0);

  ExperimentConfig full = parse_experiment_config(
      R"({"seed":9,"eval_episodes":4,"out_dir":"x","model":{"d":16,"d_vae":8,"M_max":3},
          "train":{"iterations":7,"gamma":0.9,"contrastive_batch":32})" +
          scen + "}",
      "");
  CHECK(full.train.seed == 9);
  CHECK(full.eval_episodes == 4);
  CHECK(full.out_dir == "x");
  CHECK(full.model.d == 16);
  CHECK(full.model.M_max == 3);
  CHECK(full.model.P_max == 0);  // unset caps stay zero for derivation
  CHECK(full.train.iterations == 7);
  CHECK(full.train.gamma == 0.9);
  CHECK(full.train.contrastive_batch == 32);
  CHECK(full.train.epochs == 6);  // untouched default

  // Relative scenario paths pick up the base directory; absolute ones don't.
  ExperimentConfig rel = parse_experiment_config(
      R"({"scenarios":[{"name":"s","network":"a.net.json","flows":"/abs/f.json"}]})", "/base");
  CHECK(rel.scenarios[0].network_path == "/base/a.net.json");
  CHECK(rel.scenarios[0].flows_path == "/abs/f.json");

  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"presets":"resco")" + scen + "}", ""),
                       doctest::Contains("unknown key 'presets'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"preset":"scats")" + scen + "}", ""),
                       doctest::Contains("unknown preset"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"train":{"horizon_s":60})" + scen + "}", ""),
                       doctest::Contains("unknown key 'horizon_s'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_experiment_config("{}", ""), doctest::Contains("scenarios"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"scenarios":[]})", ""),
                       doctest::Contains("at least one scenario"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_experiment_config(R"({"horizon_s":100.0)" + scen + "}", ""),
      doctest::Contains("multiple of the decision interval"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_experiment_config(
          R"({"scenarios":[{"name":"s","network":"n","flows":"f"},{"name":"s","network":"n","flows":"f"}]})",
          ""),
      doctest::Contains("duplicate scenario name"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"scenarios":[{"name":"s","flows":"f"}]})", ""),
                       doctest::Contains("missing 'network'"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{nope", ""), ParseError);
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"eval_episodes":0)" + scen + "}", ""),
                       doctest::Contains("eval_episodes"), ConfigError);

  // File loader prefixes the config path on every error.
  CHECK_THROWS_WITH_AS(load_experiment_config("/nonexistent/cfg.json"),
                       doctest::Contains("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("scenario stats summarize structure and flows") {
  Network grid = make_grid_network(2, 2);
  FlowSpec f;
  f.rates.push_back({"n_entry_c0", "s_exit_c0", 6.0, 0.0, 600.0});
  f.rates.push_back({"w_entry_r0", "e_exit_r0", 2.0, 0.0, 1200.0});  // clipped at horizon
  f.departures.push_back({"n_entry_c0", "s_exit_c0", 10.0});
  f.departures.push_back({"n_entry_c0", "s_exit_c0", 4000.0});  // beyond horizon: ignored

  ScenarioStats st = scenario_stats(grid, f, 600.0);
  CHECK(st.total_intersections == 4);
  CHECK(st.arm4 == 4);
  CHECK(st.arm2 == 0);
  CHECK(st.arm3 == 0);
  CHECK(st.arm_other == 0);
  CHECK(st.volume_veh == doctest::Approx(6.0 * 10 + 2.0 * 10 + 1).epsilon(1e-12));
  CHECK(st.rate_mean == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(st.rate_std == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(st.rate_max == 6.0);
  CHECK(st.rate_min == 2.0);

  Network mixed = make_mixed_pair_network();
  ScenarioStats ms = scenario_stats(mixed, FlowSpec{}, 600.0);
  CHECK(ms.total_intersections == 2);
  CHECK(ms.arm3 == 1);
  CHECK(ms.arm4 == 1);
  CHECK(ms.volume_veh == 0.0);
  CHECK(ms.rate_mean == 0.0);

  LoadedScenario ls;
  ls.spec = {"g22", "", "", "easy"};
  ls.stats = st;
  CHECK(registry_csv_row(ls) ==
        "g22,easy,4,0,0,4,0,81.000000,4.000000,2.000000,6.000000,2.000000");
}

TEST_CASE("model caps derive from scenarios and reject overflow") {
  TempDir dir("caps");
  write_scenario_files(dir, "tiny", testutil::minimal_two_phase_network(),
                       two_stream_flows(2.0, 2.0, 60.0));
  write_scenario_files(dir, "mixed", make_mixed_pair_network(),
                       make_mixed_pair_flows(6.0, 0.0, 60.0));
  ExperimentConfig cfg = parse_experiment_config(
      R"({"horizon_s":60.0,"scenarios":[
           {"name":"tiny","network":"tiny.net.json","flows":"tiny.flows.json"},
           {"name":"mixed","network":"mixed.net.json","flows":"mixed.flows.json"}]})",
      dir.path.string());
  std::vector<LoadedScenario> scen = load_scenarios(cfg);
  REQUIRE(scen.size() == 2);

  ModelConfig caps = derive_model_caps(cfg.model, scen);
  CHECK(caps.M_max == 12);  // four-arm node in the mixed pair
  CHECK(caps.P_max == 4);
  CHECK(caps.catalog_size >= 3);
  CHECK(caps.d == 64);
  CHECK_NOTHROW(check_caps_compatible(caps, scen));

  ModelConfig pinned = cfg.model;
  pinned.M_max = 20;  // explicit values win over scanning
  CHECK(derive_model_caps(pinned, scen).M_max == 20);

  ModelConfig small = caps;
  small.M_max = 6;
  CHECK_THROWS_WITH_AS(check_caps_compatible(small, scen),
                       doctest::Contains("caps M_max at 6"), ConfigError);
  small = caps;
  small.P_max = 3;
  CHECK_THROWS_WITH_AS(check_caps_compatible(small, scen), doctest::Contains("P_max at 3"),
                       ConfigError);
  small = caps;
  small.catalog_size = 1;
  CHECK_THROWS_WITH_AS(check_caps_compatible(small, scen),
                       doctest::Contains("outside the catalog"), ConfigError);

  // Broken scenario files surface with the scenario name and path attached.
  ExperimentConfig missing = parse_experiment_config(
      R"({"scenarios":[{"name":"gone","network":"gone.net.json","flows":"gone.flows.json"}]})",
      dir.path.string());
  CHECK_THROWS_WITH_AS(load_scenarios(missing), doctest::Contains("scenario 'gone'"),
                       ConfigError);
}

TEST_CASE("worker count respects the environment cap") {
  const char* saved = std::getenv("UNICORN_THREADS");
  const std::string saved_copy = saved ? saved : "";

  ::unsetenv("UNICORN_THREADS");
  CHECK(effective_thread_count(1) == 1);
  CHECK(effective_thread_count(0) == 1);
  CHECK(effective_thread_count(4) >= 1);

  ::setenv("UNICORN_THREADS", "2", 1);
  CHECK(effective_thread_count(10) == 2);
  CHECK(effective_thread_count(1) == 1);

  ::setenv("UNICORN_THREADS", "0", 1);
  CHECK_THROWS_WITH_AS(effective_thread_count(4), doctest::Contains("UNICORN_THREADS"),
                       ConfigError);
  ::setenv("UNICORN_THREADS", "lots", 1);
  CHECK_THROWS_AS(effective_thread_count(4), ConfigError);

  if (saved)
    ::setenv("UNICORN_THREADS", saved_copy.c_str(), 1);
  else
    ::unsetenv("UNICORN_THREADS");
}

TEST_CASE("train writes artifacts and reruns are byte-identical") {
  TempDir dir("train");
  write_scenario_files(dir, "tiny", testutil::minimal_two_phase_network(),
                       two_stream_flows(10.0, 6.0, 120.0));
  const std::string cfg_path = tiny_config(dir, {"tiny"}, 120.0, 2, "run1");

  std::ostringstream log;
  CHECK(cmd_train({cfg_path, {}, "", "fixed", ""}, log) == 0);
  for (const char* f : {"checkpoint.bin", "manifest.json", "training_log.csv", "registry.csv",
                        "run_info.json"})
    CHECK(fs::exists(dir.path / "run1" / f));
  CHECK(log.str().find("single regime") != std::string::npos);

  const std::string csv1 = read_text_file(dir.str("run1/training_log.csv"));
  CHECK(csv1.rfind("iter,scenario,mean_return,L_p,L_v,L_e,L_vae,L_cont,wall_s\n", 0) == 0);

  json info = json::parse(read_text_file(dir.str("run1/run_info.json")));
  CHECK(info["regime"] == "single");
  CHECK(info["seed"] == 5);
  CHECK(info["scenarios"] == json::array({"tiny"}));

  json manifest = json::parse(read_text_file(dir.str("run1/manifest.json")));
  CHECK(manifest["d"] == 8);
  CHECK(manifest["M_max"] == 2);
  CHECK(manifest["P_max"] == 2);

  // Determinism: a fresh run with the same config and seed reproduces the
  // training CSV column-for-column except wall time.
  std::ostringstream log2;
  RunOptions again{cfg_path, {}, dir.str("run2"), "fixed", ""};
  CHECK(cmd_train(again, log2) == 0);
  auto strip_wall = [](const std::string& csv) {
    std::string out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  CHECK(strip_wall(read_text_file(dir.str("run2/training_log.csv"))) == strip_wall(csv1));
  CHECK(read_text_file(dir.str("run2/checkpoint.bin")) ==
        read_text_file(dir.str("run1/checkpoint.bin")));

  // Seed override changes the run.
  std::ostringstream log3;
  CHECK(cmd_train({cfg_path, 77ull, dir.str("run3"), "fixed", ""}, log3) == 0);
  CHECK(read_text_file(dir.str("run3/checkpoint.bin")) !=
        read_text_file(dir.str("run1/checkpoint.bin")));

  // Two scenarios flip the regime tag.
  write_scenario_files(dir, "mixed", make_mixed_pair_network(),
                       make_mixed_pair_flows(6.0, 0.0, 120.0));
  const std::string joint_path = tiny_config(dir, {"tiny", "mixed"}, 120.0, 1, "joint");
  std::ostringstream log4;
  CHECK(cmd_train({joint_path, {}, "", "fixed", ""}, log4) == 0);
  json joint_info = json::parse(read_text_file(dir.str("joint/run_info.json")));
  CHECK(joint_info["regime"] == "multiple");
  CHECK(log4.str().find("multiple regime") != std::string::npos);
  const std::string joint_csv = read_text_file(dir.str("joint/training_log.csv"));
  CHECK(joint_csv.find(",tiny,") != std::string::npos);
  CHECK(joint_csv.find(",mixed,") != std::string::npos);
}

TEST_CASE("eval and baseline share the metrics schema and seeds") {
  TempDir dir("eval");
  write_scenario_files(dir, "tiny", testutil::minimal_two_phase_network(),
                       two_stream_flows(12.0, 8.0, 300.0));
  const std::string cfg_path = tiny_config(dir, {"tiny"}, 300.0, 1, "art", 4);

  std::ostringstream tlog;
  REQUIRE(cmd_train({cfg_path, {}, "", "fixed", ""}, tlog) == 0);
  const std::string ckpt = dir.str("art/checkpoint.bin");

  std::ostringstream elog;
  CHECK(cmd_eval({cfg_path, {}, dir.str("ev"), "fixed", ckpt}, elog) == 0);
  const std::string eval_csv = read_text_file(dir.str("ev/eval_metrics.csv"));
  auto rows = parse_csv(eval_csv);
  REQUIRE(rows.size() == 1 + 4 + 2);  // header, episodes, mean, std
  CHECK(eval_csv.rfind(std::string(kMetricsCsvHeader) + "\n", 0) == 0);
  CHECK(rows[1][0] == "tiny");
  CHECK(rows[1][1] == "5");  // base seed
  CHECK(rows[4][1] == "8");
  CHECK(rows[5][1] == "mean");
  CHECK(rows[6][1] == "std");

  // The mean row is the column mean of the episode rows.
  for (size_t col = 2; col < rows[1].size(); ++col) {
    double m = 0.0;
    for (size_t r = 1; r <= 4; ++r) m += std::stod(rows[r][col]);
    m /= 4.0;
    CHECK(std::stod(rows[5][col]) == doctest::Approx(m).epsilon(1e-4));
  }

  // Byte-identical CSV on a second invocation.
  std::ostringstream elog2;
  CHECK(cmd_eval({cfg_path, {}, dir.str("ev2"), "fixed", ckpt}, elog2) == 0);
  CHECK(read_text_file(dir.str("ev2/eval_metrics.csv")) == eval_csv);

  // Baselines: same header, same seed column, one file per controller.
  std::ostringstream blog;
  CHECK(cmd_baseline({cfg_path, {}, dir.str("bl"), "greedy", ""}, blog) == 0);
  const std::string greedy_csv = read_text_file(dir.str("bl/baseline_greedy_metrics.csv"));
  auto grows = parse_csv(greedy_csv);
  REQUIRE(grows.size() == rows.size());
  CHECK(grows[0] == rows[0]);
  for (size_t r = 1; r < grows.size(); ++r) CHECK(grows[r][1] == rows[r][1]);

  std::ostringstream blog2;
  CHECK(cmd_baseline({cfg_path, {}, dir.str("bl"), "maxpressure", ""}, blog2) == 0);
  CHECK(fs::exists(dir.path / "bl" / "baseline_maxpressure_metrics.csv"));

  // Congested two-phase approach: greedy and fixed cycling disagree.
  const std::string fixed_dir = dir.str("blf");
  std::ostringstream blog3;
  CHECK(cmd_baseline({cfg_path, {}, fixed_dir, "fixed", ""}, blog3) == 0);
  CHECK(read_text_file(dir.str("blf/baseline_fixed_metrics.csv")) != greedy_csv);

  // Empty flows produce all-zero metric rows.
  FlowSpec none;
  write_scenario_files(dir, "idle", testutil::minimal_two_phase_network(), none);
  const std::string idle_cfg = tiny_config(dir, {"idle"}, 60.0, 1, "idle_out", 2);
  std::ostringstream blog4;
  CHECK(cmd_baseline({idle_cfg, {}, dir.str("idle_out"), "fixed", ""}, blog4) == 0);
  auto idle_rows = parse_csv(read_text_file(dir.str("idle_out/baseline_fixed_metrics.csv")));
  for (size_t r = 1; r < idle_rows.size(); ++r)
    for (size_t c = 2; c < idle_rows[r].size(); ++c)
      CHECK(std::stod(idle_rows[r][c]) == 0.0);

  // Caps mismatch: a checkpoint trained on the 2-movement network cannot
  // evaluate the 12-movement mixed pair.
  write_scenario_files(dir, "mixed", make_mixed_pair_network(),
                       make_mixed_pair_flows(6.0, 0.0, 300.0));
  const std::string mixed_cfg = tiny_config(dir, {"mixed"}, 300.0, 1, "mx", 2);
  std::ostringstream elog3;
  CHECK_THROWS_WITH_AS(cmd_eval({mixed_cfg, {}, dir.str("mx"), "fixed", ckpt}, elog3),
                       doctest::Contains("caps M_max"), ConfigError);

  CHECK_THROWS_WITH_AS(cmd_eval({cfg_path, {}, dir.str("ev3"), "fixed", ""}, elog3),
                       doctest::Contains("--checkpoint"), ConfigError);
}

TEST_CASE("a 16-intersection grid evaluates without shape errors") {
  TempDir dir("grid4");
  write_scenario_files(dir, "g44", make_grid_network(4, 4),
                       make_grid_through_flows(4, 4, 24.0, 0.0, 120.0));
  const std::string cfg_path = tiny_config(dir, {"g44"}, 120.0, 1, "g44_out", 2);

  // Untrained checkpoint with scanned caps, then a full eval pass.
  std::ostringstream log;
  ExperimentConfig cfg = load_experiment_config(cfg_path);
  std::vector<LoadedScenario> scen = load_scenarios(cfg);
  ModelConfig caps = derive_model_caps(cfg.model, scen);
  caps.validate();
  Rng rng(3);
  Model model(caps, rng);
  fs::create_directories(dir.path / "g44_out");
  save_checkpoint_file(dir.str("g44_out/checkpoint.bin"), model.named_params());
  write_text_file(dir.str("g44_out/manifest.json"), model.manifest_json());

  CHECK(cmd_eval({cfg_path, {}, dir.str("g44_out"), "fixed", dir.str("g44_out/checkpoint.bin")},
                 log) == 0);
  auto rows = parse_csv(read_text_file(dir.str("g44_out/eval_metrics.csv")));
  CHECK(rows.size() == 1 + 2 + 2);
  CHECK(scen[0].stats.total_intersections == 16);
  CHECK(scen[0].stats.arm4 == 16);
}

TEST_CASE("argv entry point dispatches and reports failures") {
  TempDir dir("argv");
  write_scenario_files(dir, "tiny", testutil::minimal_two_phase_network(),
                       two_stream_flows(6.0, 4.0, 60.0));
  const std::string cfg_path = tiny_config(dir, {"tiny"}, 60.0, 1, "cli_run", 2);

  std::ostringstream out, err;
  CHECK(run_cli({"validate", "--config", cfg_path}, out, err) == 0);
  CHECK(out.str().find(kRegistryCsvHeader) != std::string::npos);
  CHECK(out.str().find("config OK") != std::string::npos);

  CHECK(run_cli({"train", "--config", cfg_path, "--seed", "11"}, out, err) == 0);
  CHECK(run_cli({"eval", "--config", cfg_path, "--checkpoint",
                 dir.str("cli_run/checkpoint.bin")},
                out, err) == 0);
  CHECK(run_cli({"baseline", "--config", cfg_path, "--controller", "maxpressure"}, out, err) ==
        0);
  CHECK(fs::exists(dir.path / "cli_run" / "baseline_maxpressure_metrics.csv"));

  std::ostringstream err2;
  CHECK(run_cli({"baseline", "--config", cfg_path, "--controller", "webster"}, out, err2) == 1);
  CHECK(err2.str().find("error:") != std::string::npos);
  CHECK(err2.str().find("unknown controller") != std::string::npos);

  std::ostringstream err3;
  CHECK(run_cli({"eval", "--config", cfg_path, "--checkpoint", dir.str("missing.bin")}, out,
                err3) == 1);
  CHECK(err3.str().find("error:") != std::string::npos);

  CHECK(run_cli({"launch"}, out, err) != 0);          // unknown subcommand
  CHECK(run_cli({"train"}, out, err) != 0);           // missing --config
  CHECK(run_cli({"eval", "--config", cfg_path}, out, err) != 0);  // missing --checkpoint
  CHECK(run_cli({}, out, err) != 0);                  // no subcommand
}
