#include "unicorn/cli.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "unicorn/checkpoint.hpp"
#include "unicorn/encode.hpp"

namespace unicorn {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
  if (!out) throw Error("short write: " + path);
}

namespace {

double require_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return v.get<double>();
}

int require_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config: '" + key + "' must be an integer");
  return v.get<int>();
}

std::string require_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config: '" + key + "' must be a string");
  return v.get<std::string>();
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

void apply_preset(const std::string& name, SimConfig& sim) {
  if (name == "resco") {
    sim.decision_interval_s = 15.0;
    sim.yellow_s = 5.0;
  } else if (name == "ma2c") {
    sim.decision_interval_s = 10.0;
    sim.yellow_s = 3.0;
  } else {
    throw ConfigError("config: unknown preset '" + name + "' (want resco|ma2c)");
  }
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty()) return p;
  fs::path fp(p);
  if (fp.is_absolute() || base_dir.empty()) return p;
  return (fs::path(base_dir) / fp).string();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col_of_offset(json_text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("config JSON syntax error at line " + std::to_string(line) +
                     ", column " + std::to_string(col));
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(doc, {"preset", "sim", "horizon_s", "seed", "eval_episodes", "out_dir",
                       "model", "train", "scenarios"},
                 "the top level");

  ExperimentConfig cfg;
  if (doc.contains("preset")) apply_preset(require_string(doc["preset"], "preset"), cfg.sim);

  if (doc.contains("sim")) {
    const json& s = doc["sim"];
    if (!s.is_object()) throw ConfigError("config: 'sim' must be an object");
    reject_unknown(s, {"tick_s", "decision_interval_s", "yellow_s", "detector_range_m",
                       "vehicle_len_m", "saturation_headway_s"},
                   "'sim'");
    if (s.contains("tick_s")) cfg.sim.tick_s = require_number(s["tick_s"], "sim.tick_s");
    if (s.contains("decision_interval_s"))
      cfg.sim.decision_interval_s =
          require_number(s["decision_interval_s"], "sim.decision_interval_s");
    if (s.contains("yellow_s")) cfg.sim.yellow_s = require_number(s["yellow_s"], "sim.yellow_s");
    if (s.contains("detector_range_m"))
      cfg.sim.detector_range_m = require_number(s["detector_range_m"], "sim.detector_range_m");
    if (s.contains("vehicle_len_m"))
      cfg.sim.vehicle_len_m = require_number(s["vehicle_len_m"], "sim.vehicle_len_m");
    if (s.contains("saturation_headway_s"))
      cfg.sim.saturation_headway_s =
          require_number(s["saturation_headway_s"], "sim.saturation_headway_s");
  }

  if (doc.contains("horizon_s")) cfg.horizon_s = require_number(doc["horizon_s"], "horizon_s");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer() || doc["seed"].get<long long>() < 0)
      throw ConfigError("config: 'seed' must be a non-negative integer");
    cfg.train.seed = doc["seed"].get<unsigned long long>();
  }
  if (doc.contains("eval_episodes"))
    cfg.eval_episodes = require_int(doc["eval_episodes"], "eval_episodes");
  if (doc.contains("out_dir")) cfg.out_dir = require_string(doc["out_dir"], "out_dir");

  if (doc.contains("model")) {
    const json& m = doc["model"];
    if (!m.is_object()) throw ConfigError("config: 'model' must be an object");
    reject_unknown(m, {"d", "d_vae", "M_max", "P_max", "catalog_size"}, "'model'");
    if (m.contains("d")) cfg.model.d = require_int(m["d"], "model.d");
    if (m.contains("d_vae")) cfg.model.d_vae = require_int(m["d_vae"], "model.d_vae");
    if (m.contains("M_max")) cfg.model.M_max = require_int(m["M_max"], "model.M_max");
    if (m.contains("P_max")) cfg.model.P_max = require_int(m["P_max"], "model.P_max");
    if (m.contains("catalog_size"))
      cfg.model.catalog_size = require_int(m["catalog_size"], "model.catalog_size");
  } else {
    cfg.model.M_max = 0;  // derive from scenarios
    cfg.model.P_max = 0;
    cfg.model.catalog_size = 0;
  }
  if (!doc.contains("model") || !doc["model"].contains("M_max")) cfg.model.M_max = 0;
  if (!doc.contains("model") || !doc["model"].contains("P_max")) cfg.model.P_max = 0;
  if (!doc.contains("model") || !doc["model"].contains("catalog_size"))
    cfg.model.catalog_size = 0;

  if (doc.contains("train")) {
    const json& t = doc["train"];
    if (!t.is_object()) throw ConfigError("config: 'train' must be an object");
    reject_unknown(t, {"iterations", "epochs", "gamma", "lambda_gae", "lr_actor", "lr_critic",
                       "clip_eps", "c1", "c2", "c3", "c4", "tau_cont", "contrastive_batch"},
                   "'train'");
    TrainConfig& tr = cfg.train;
    if (t.contains("iterations")) tr.iterations = require_int(t["iterations"], "train.iterations");
    if (t.contains("epochs")) tr.epochs = require_int(t["epochs"], "train.epochs");
    if (t.contains("gamma")) tr.gamma = require_number(t["gamma"], "train.gamma");
    if (t.contains("lambda_gae")) tr.lambda_gae = require_number(t["lambda_gae"], "train.lambda_gae");
    if (t.contains("lr_actor")) tr.lr_actor = require_number(t["lr_actor"], "train.lr_actor");
    if (t.contains("lr_critic")) tr.lr_critic = require_number(t["lr_critic"], "train.lr_critic");
    if (t.contains("clip_eps")) tr.clip_eps = require_number(t["clip_eps"], "train.clip_eps");
    if (t.contains("c1")) tr.c1 = require_number(t["c1"], "train.c1");
    if (t.contains("c2")) tr.c2 = require_number(t["c2"], "train.c2");
    if (t.contains("c3")) tr.c3 = require_number(t["c3"], "train.c3");
    if (t.contains("c4")) tr.c4 = require_number(t["c4"], "train.c4");
    if (t.contains("tau_cont")) tr.tau_cont = require_number(t["tau_cont"], "train.tau_cont");
    if (t.contains("contrastive_batch"))
      tr.contrastive_batch = require_int(t["contrastive_batch"], "train.contrastive_batch");
  }
  cfg.train.horizon_s = cfg.horizon_s;

  if (!doc.contains("scenarios") || !doc["scenarios"].is_array())
    throw ConfigError("config: 'scenarios' must be an array");
  for (const json& s : doc["scenarios"]) {
    if (!s.is_object()) throw ConfigError("config: each scenario must be an object");
    reject_unknown(s, {"name", "network", "flows", "difficulty"}, "a scenario entry");
    for (const char* key : {"name", "network", "flows"})
      if (!s.contains(key))
        throw ConfigError(std::string("config: scenario entry missing '") + key + "'");
    ScenarioSpec spec;
    spec.name = require_string(s["name"], "scenario.name");
    spec.network_path = resolve_path(require_string(s["network"], "scenario.network"), base_dir);
    spec.flows_path = resolve_path(require_string(s["flows"], "scenario.flows"), base_dir);
    if (s.contains("difficulty"))
      spec.difficulty = require_string(s["difficulty"], "scenario.difficulty");
    cfg.scenarios.push_back(std::move(spec));
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  try {
    return parse_experiment_config(read_text_file(path),
                                   fs::path(path).parent_path().string());
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  if (scenarios.empty()) throw ConfigError("config: at least one scenario is required");
  std::set<std::string> names;
  for (const auto& s : scenarios) {
    if (s.name.empty()) throw ConfigError("config: scenario names must be nonempty");
    if (!names.insert(s.name).second)
      throw ConfigError("config: duplicate scenario name '" + s.name + "'");
  }
  if (horizon_s <= 0.0) throw ConfigError("config: horizon_s must be positive");
  const double steps = horizon_s / sim.decision_interval_s;
  if (std::fabs(steps - std::round(steps)) > 1e-9)
    throw ConfigError("config: horizon_s must be a multiple of the decision interval");
  if (eval_episodes < 1) throw ConfigError("config: eval_episodes must be at least 1");
  train.validate();
}

ScenarioStats scenario_stats(const Network& net, const FlowSpec& flows, double horizon_s) {
  ScenarioStats st;
  st.total_intersections = static_cast<int>(net.intersection_ids().size());
  for (const auto& id : net.intersection_ids()) {
    switch (net.intersection(id).incoming.size()) {
      case 2: st.arm2 += 1; break;
      case 3: st.arm3 += 1; break;
      case 4: st.arm4 += 1; break;
      default: st.arm_other += 1; break;
    }
  }
  bool first = true;
  for (const auto& r : flows.rates) {
    const double window = std::max(0.0, std::min(r.end_s, horizon_s) - std::max(r.start_s, 0.0));
    st.volume_veh += r.veh_per_min / 60.0 * window;
    st.rate_mean += r.veh_per_min;
    st.rate_max = first ? r.veh_per_min : std::max(st.rate_max, r.veh_per_min);
    st.rate_min = first ? r.veh_per_min : std::min(st.rate_min, r.veh_per_min);
    first = false;
  }
  for (const auto& d : flows.departures)
    if (d.depart_s >= 0.0 && d.depart_s < horizon_s) st.volume_veh += 1.0;
  if (!flows.rates.empty()) {
    st.rate_mean /= static_cast<double>(flows.rates.size());
    double var = 0.0;
    for (const auto& r : flows.rates) {
      const double d = r.veh_per_min - st.rate_mean;
      var += d * d;
    }
    st.rate_std = std::sqrt(var / static_cast<double>(flows.rates.size()));
  }
  return st;
}

std::vector<LoadedScenario> load_scenarios(const ExperimentConfig& cfg) {
  std::vector<LoadedScenario> out;
  for (const auto& spec : cfg.scenarios) {
    LoadedScenario s;
    s.spec = spec;
    try {
      s.net = parse_network(read_text_file(spec.network_path));
    } catch (const Error& e) {
      throw ConfigError("scenario '" + spec.name + "' (" + spec.network_path + "): " + e.what());
    }
    try {
      s.flows = parse_flows(read_text_file(spec.flows_path));
      // Constructing a state validates endpoints, routes, and sim timing.
      SimState probe(s.net, s.flows, cfg.sim, 0);
    } catch (const Error& e) {
      throw ConfigError("scenario '" + spec.name + "' (" + spec.flows_path + "): " + e.what());
    }
    s.stats = scenario_stats(s.net, s.flows, cfg.horizon_s);
    out.push_back(std::move(s));
  }
  return out;
}

const char* kRegistryCsvHeader =
    "scenario,difficulty,intersections,arm2,arm3,arm4,arm_other,volume_veh,"
    "rate_mean_vpm,rate_std_vpm,rate_max_vpm,rate_min_vpm";

std::string registry_csv_row(const LoadedScenario& s) {
  std::ostringstream out;
  out << s.spec.name << ',' << s.spec.difficulty << ',' << s.stats.total_intersections << ','
      << s.stats.arm2 << ',' << s.stats.arm3 << ',' << s.stats.arm4 << ',' << s.stats.arm_other
      << ',' << csv_double(s.stats.volume_veh) << ',' << csv_double(s.stats.rate_mean) << ','
      << csv_double(s.stats.rate_std) << ',' << csv_double(s.stats.rate_max) << ','
      << csv_double(s.stats.rate_min);
  return out.str();
}

ModelConfig derive_model_caps(ModelConfig base, const std::vector<LoadedScenario>& scenarios) {
  int m_max = 0, p_max = 0, catalog = 0;
  for (const auto& s : scenarios) {
    for (const auto& id : s.net.intersection_ids()) {
      const Intersection& node = s.net.intersection(id);
      m_max = std::max(m_max, static_cast<int>(node.movements.size()));
      p_max = std::max(p_max, static_cast<int>(node.phases.size()));
      catalog = std::max(catalog, node.phase_template_id + 1);
    }
  }
  if (base.M_max == 0) base.M_max = m_max;
  if (base.P_max == 0) base.P_max = p_max;
  if (base.catalog_size == 0) base.catalog_size = catalog;
  return base;
}

void check_caps_compatible(const ModelConfig& caps,
                           const std::vector<LoadedScenario>& scenarios) {
  for (const auto& s : scenarios) {
    for (const auto& id : s.net.intersection_ids()) {
      const Intersection& node = s.net.intersection(id);
      if (static_cast<int>(node.movements.size()) > caps.M_max)
        throw ConfigError("scenario '" + s.spec.name + "': intersection '" + id + "' has " +
                          std::to_string(node.movements.size()) +
                          " movements but the model caps M_max at " +
                          std::to_string(caps.M_max));
      if (static_cast<int>(node.phases.size()) > caps.P_max)
        throw ConfigError("scenario '" + s.spec.name + "': intersection '" + id + "' has " +
                          std::to_string(node.phases.size()) +
                          " phases but the model caps P_max at " + std::to_string(caps.P_max));
      if (node.phase_template_id >= caps.catalog_size)
        throw ConfigError("scenario '" + s.spec.name + "': intersection '" + id +
                          "' uses phase template " + std::to_string(node.phase_template_id) +
                          " outside the catalog (size " + std::to_string(caps.catalog_size) +
                          ")");
    }
  }
}

int effective_thread_count(int jobs) {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap <= 0) cap = 1;
  if (const char* env = std::getenv("UNICORN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0)
      throw ConfigError("UNICORN_THREADS must be a positive integer, got '" +
                        std::string(env) + "'");
    cap = static_cast<int>(std::min<long>(v, 1 << 10));
  }
  return std::max(1, std::min(jobs, cap));
}

namespace {

// Runs fn(0..n-1) across up to `workers` threads; results land in call order.
std::vector<EpisodeResult> run_parallel(int n, int workers,
                                        const std::function<EpisodeResult(int)>& fn) {
  std::vector<EpisodeResult> out(static_cast<size_t>(n));
  if (workers <= 1 || n <= 1) {
    for (int k = 0; k < n; ++k) out[static_cast<size_t>(k)] = fn(k);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1))
          out[static_cast<size_t>(k)] = fn(k);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
        next.store(n);  // stop handing out work
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

EpisodeResult run_policy_episode(const LoadedScenario& sc, const Model& model,
                                 const SimConfig& sim, double horizon_s, uint64_t seed) {
  const ModelConfig& mc = model.config();
  std::map<std::string, std::vector<double>> hidden;
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x5eedULL);
  return run_episode(sc.net, sc.flows, sim, seed, horizon_s,
                     [&](const SimState& st, const std::string& id, long) {
                       EncodedObservation obs =
                           observe(st, id, mc.M_max, mc.P_max, mc.catalog_size);
                       AgentStep step = model.act(obs, hidden[id], rng, ActMode::kGreedy);
                       hidden[id] = step.gru_hidden;
                       return step.action;
                     });
}

EpisodeResult run_controller_episode(const LoadedScenario& sc, ControllerKind kind,
                                     const SimConfig& sim, double horizon_s, uint64_t seed) {
  ControllerState ctrl;
  ctrl.kind = kind;
  return run_episode(sc.net, sc.flows, sim, seed, horizon_s,
                     [&](const SimState& st, const std::string& id, long t) {
                       return controller_action(ctrl, st, id, t);
                     });
}

// Per-episode rows for one scenario plus mean/std summary rows, in seed order.
using MetricField = double MetricsReport::*;
constexpr std::array<MetricField, 11> kSummaryFields = {
    &MetricsReport::queue_len_mean,  &MetricsReport::queue_len_std,
    &MetricsReport::speed_mean,      &MetricsReport::speed_std,
    &MetricsReport::int_delay_mean,  &MetricsReport::int_delay_std,
    &MetricsReport::completion_rate, &MetricsReport::trip_time_mean,
    &MetricsReport::trip_time_std,   &MetricsReport::trip_delay_mean,
    &MetricsReport::trip_delay_std};

void append_scenario_rows(std::ostringstream& csv, const std::string& name,
                          uint64_t base_seed, const std::vector<EpisodeResult>& episodes) {
  for (size_t k = 0; k < episodes.size(); ++k)
    csv << metrics_csv_row(name, std::to_string(base_seed + k), episodes[k].metrics) << '\n';
  MetricsReport mean_r, std_r;
  const double n = static_cast<double>(episodes.size());
  for (MetricField f : kSummaryFields) {
    double mean = 0.0;
    for (const auto& e : episodes) mean += e.metrics.*f;
    mean /= n;
    double var = 0.0;
    for (const auto& e : episodes) var += (e.metrics.*f - mean) * (e.metrics.*f - mean);
    mean_r.*f = mean;
    std_r.*f = std::sqrt(var / n);
  }
  csv << metrics_csv_row(name, "mean", mean_r) << '\n';
  csv << metrics_csv_row(name, "std", std_r) << '\n';
}

double mean_of_returns(const std::vector<EpisodeResult>& episodes) {
  double m = 0.0;
  for (const auto& e : episodes) m += e.mean_return;
  return episodes.empty() ? 0.0 : m / static_cast<double>(episodes.size());
}

std::string registry_table(const std::vector<LoadedScenario>& scenarios) {
  std::ostringstream out;
  out << kRegistryCsvHeader << '\n';
  for (const auto& s : scenarios) out << registry_csv_row(s) << '\n';
  return out.str();
}

ExperimentConfig load_with_overrides(const RunOptions& opt) {
  if (opt.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_experiment_config(opt.config_path);
  if (opt.seed) cfg.train.seed = *opt.seed;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  return cfg;
}

}  // namespace

int cmd_train(const RunOptions& opt, std::ostream& log) {
  ExperimentConfig cfg = load_with_overrides(opt);
  std::vector<LoadedScenario> scenarios = load_scenarios(cfg);
  ModelConfig caps = derive_model_caps(cfg.model, scenarios);
  caps.validate();
  check_caps_compatible(caps, scenarios);

  Rng init_rng(cfg.train.seed);
  Model model(caps, init_rng);
  std::vector<ScenarioEnv> envs;
  envs.reserve(scenarios.size());
  for (const auto& s : scenarios) envs.push_back({s.spec.name, s.net, s.flows, cfg.sim});
  cfg.train.threads = effective_thread_count(static_cast<int>(envs.size()));

  const std::string regime = scenarios.size() > 1 ? "multiple" : "single";
  log << "train: " << regime << " regime, " << scenarios.size() << " scenario(s), "
      << cfg.train.iterations << " iteration(s), seed " << cfg.train.seed << "\n";

  std::ostringstream csv;
  std::vector<IterationLog> logs = train(model, envs, cfg.train, &csv);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  write_text_file((out / "training_log.csv").string(), csv.str());
  save_checkpoint_file((out / "checkpoint.bin").string(), model.named_params());
  write_text_file((out / "manifest.json").string(), model.manifest_json());
  write_text_file((out / "registry.csv").string(), registry_table(scenarios));

  json info;
  info["regime"] = regime;
  info["seed"] = cfg.train.seed;
  info["iterations"] = cfg.train.iterations;
  info["scenarios"] = json::array();
  for (const auto& s : scenarios) info["scenarios"].push_back(s.spec.name);
  write_text_file((out / "run_info.json").string(), info.dump(2) + "\n");

  for (size_t k = logs.size() >= scenarios.size() ? logs.size() - scenarios.size() : 0;
       k < logs.size(); ++k)
    log << "final " << logs[k].scenario << ": mean_return " << csv_double(logs[k].mean_return)
        << "\n";
  log << "wrote " << (out / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_eval(const RunOptions& opt, std::ostream& log) {
  ExperimentConfig cfg = load_with_overrides(opt);
  if (opt.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  std::vector<LoadedScenario> scenarios = load_scenarios(cfg);

  const fs::path ckpt(opt.checkpoint);
  const std::string manifest_path = (ckpt.parent_path() / "manifest.json").string();
  ModelConfig caps = Model::parse_manifest(read_text_file(manifest_path));
  caps.validate();
  check_caps_compatible(caps, scenarios);

  Rng init_rng(1);
  Model model(caps, init_rng);
  model.load_state(load_checkpoint_file(opt.checkpoint));

  const uint64_t base_seed = cfg.train.seed;
  const int workers = effective_thread_count(cfg.eval_episodes);
  std::ostringstream csv;
  csv << kMetricsCsvHeader << '\n';
  for (const auto& sc : scenarios) {
    std::vector<EpisodeResult> episodes =
        run_parallel(cfg.eval_episodes, workers, [&](int k) {
          return run_policy_episode(sc, model, cfg.sim, cfg.horizon_s,
                                    base_seed + static_cast<uint64_t>(k));
        });
    append_scenario_rows(csv, sc.spec.name, base_seed, episodes);
    log << "eval " << sc.spec.name << ": " << cfg.eval_episodes << " episode(s), mean return "
        << csv_double(mean_of_returns(episodes)) << "\n";
  }

  fs::create_directories(cfg.out_dir);
  const std::string path = (fs::path(cfg.out_dir) / "eval_metrics.csv").string();
  write_text_file(path, csv.str());
  log << "wrote " << path << "\n";
  return 0;
}

int cmd_baseline(const RunOptions& opt, std::ostream& log) {
  ExperimentConfig cfg = load_with_overrides(opt);
  const ControllerKind kind = parse_controller(opt.controller);
  std::vector<LoadedScenario> scenarios = load_scenarios(cfg);

  const uint64_t base_seed = cfg.train.seed;
  const int workers = effective_thread_count(cfg.eval_episodes);
  std::ostringstream csv;
  csv << kMetricsCsvHeader << '\n';
  for (const auto& sc : scenarios) {
    std::vector<EpisodeResult> episodes =
        run_parallel(cfg.eval_episodes, workers, [&](int k) {
          return run_controller_episode(sc, kind, cfg.sim, cfg.horizon_s,
                                        base_seed + static_cast<uint64_t>(k));
        });
    append_scenario_rows(csv, sc.spec.name, base_seed, episodes);
    log << "baseline " << controller_name(kind) << " " << sc.spec.name << ": "
        << cfg.eval_episodes << " episode(s), mean return "
        << csv_double(mean_of_returns(episodes)) << "\n";
  }

  fs::create_directories(cfg.out_dir);
  const std::string path =
      (fs::path(cfg.out_dir) / ("baseline_" + controller_name(kind) + "_metrics.csv")).string();
  write_text_file(path, csv.str());
  log << "wrote " << path << "\n";
  return 0;
}

int cmd_validate(const RunOptions& opt, std::ostream& log) {
  ExperimentConfig cfg = load_with_overrides(opt);
  std::vector<LoadedScenario> scenarios = load_scenarios(cfg);
  ModelConfig caps = derive_model_caps(cfg.model, scenarios);
  caps.validate();
  check_caps_compatible(caps, scenarios);
  log << registry_table(scenarios);
  log << "caps: M_max " << caps.M_max << ", P_max " << caps.P_max << ", catalog "
      << caps.catalog_size << ", d " << caps.d << ", d_vae " << caps.d_vae << "\n";
  log << "config OK: " << scenarios.size() << " scenario(s), horizon "
      << csv_double(cfg.horizon_s) << " s\n";
  return 0;
}

}  // namespace unicorn

#include <CLI11.hpp>

namespace unicorn {

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"adaptive traffic-signal control laboratory"};
  app.require_subcommand(1);

  RunOptions opt;
  unsigned long long seed_val = 0;
  std::vector<CLI::Option*> seed_opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "experiment config JSON")->required();
    seed_opts.push_back(sub->add_option("--seed", seed_val, "base seed override"));
    sub->add_option("--out", opt.out_dir, "output directory override");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a policy, write checkpoint and logs");
  add_common(train_cmd);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over seeded episodes");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", opt.checkpoint, "weight file (manifest.json beside it)")
      ->required();
  CLI::App* base_cmd =
      app.add_subcommand("baseline", "run a classical controller over seeded episodes");
  add_common(base_cmd);
  base_cmd->add_option("--controller", opt.controller, "fixed|greedy|maxpressure");
  CLI::App* val_cmd = app.add_subcommand("validate", "parse and check a config, run nothing");
  add_common(val_cmd);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("unicorn");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (CLI::Option* o : seed_opts)
    if (o->count() > 0) opt.seed = seed_val;

  try {
    if (train_cmd->parsed()) return cmd_train(opt, out);
    if (eval_cmd->parsed()) return cmd_eval(opt, out);
    if (base_cmd->parsed()) return cmd_baseline(opt, out);
    return cmd_validate(opt, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace unicorn
