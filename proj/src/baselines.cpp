#include "unicorn/baselines.hpp"

#include <cmath>

#include "unicorn/common.hpp"

namespace unicorn {

ControllerKind parse_controller(const std::string& name) {
  if (name == "fixed") return ControllerKind::kFixedTime;
  if (name == "greedy") return ControllerKind::kGreedy;
  if (name == "maxpressure") return ControllerKind::kMaxPressure;
  throw ConfigError("unknown controller '" + name + "' (want fixed|greedy|maxpressure)");
}

std::string controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kFixedTime: return "fixed";
    case ControllerKind::kGreedy: return "greedy";
    case ControllerKind::kMaxPressure: return "maxpressure";
  }
  throw ConfigError("unknown controller kind");
}

int fixed_time_action(ControllerState& ctrl, const Network& net,
                      const std::string& intersection, long step) {
  const auto& phases = net.intersection(intersection).phases;
  const int n = static_cast<int>(phases.size());
  const int pos = static_cast<int>(step % n);
  ctrl.cursor[intersection] = pos;
  return pos;
}

int greedy_action(const SimState& st, const std::string& intersection) {
  const Intersection& node = st.net().intersection(intersection);
  int best = 0;
  long best_queue = -1;
  for (size_t p = 0; p < node.phases.size(); ++p) {
    long queued = 0;
    for (int m : node.phases[p].active_movements)
      queued += st.detector_read(node.movements[static_cast<size_t>(m)].in_lane).queue_count;
    if (queued > best_queue) {
      best_queue = queued;
      best = static_cast<int>(p);
    }
  }
  return best;
}

int max_pressure_action(const SimState& st, const std::string& intersection,
                        bool sum_over_movements) {
  const Intersection& node = st.net().intersection(intersection);
  int best = 0;
  double best_pressure = -1e300;
  for (size_t p = 0; p < node.phases.size(); ++p) {
    const auto& active = node.phases[p].active_movements;
    double pressure = 0.0;
    for (int m : active) {
      const Movement& mv = node.movements[static_cast<size_t>(m)];
      pressure += st.detector_read(mv.in_lane).queue_count -
                  st.detector_read(mv.out_lane).queue_count;
    }
    if (!sum_over_movements && !active.empty())
      pressure /= static_cast<double>(active.size());
    if (pressure > best_pressure) {
      best_pressure = pressure;
      best = static_cast<int>(p);
    }
  }
  return best;
}

int controller_action(ControllerState& ctrl, const SimState& st,
                      const std::string& intersection, long step) {
  switch (ctrl.kind) {
    case ControllerKind::kFixedTime:
      return fixed_time_action(ctrl, st.net(), intersection, step);
    case ControllerKind::kGreedy:
      return greedy_action(st, intersection);
    case ControllerKind::kMaxPressure:
      return max_pressure_action(st, intersection, ctrl.pressure_sum);
  }
  throw ConfigError("unknown controller kind");
}

EpisodeResult run_episode(const Network& net, const FlowSpec& flows, const SimConfig& sim,
                          uint64_t seed, double horizon_s, const ActionFn& pick) {
  SimState st(net, flows, sim, seed);
  const long ticks_per_step = std::lround(sim.decision_interval_s / sim.tick_s);
  const long steps = std::lround(horizon_s / sim.decision_interval_s);
  if (steps <= 0 || ticks_per_step <= 0)
    throw ConfigError("episode horizon shorter than one decision interval");
  const auto& ids = net.intersection_ids();
  double return_sum = 0.0;
  for (long t = 0; t < steps; ++t) {
    std::map<std::string, int> actions;
    for (const std::string& id : ids) actions[id] = pick(st, id, t);
    st.apply_actions(actions);
    for (long k = 0; k < ticks_per_step; ++k) st.tick();
    for (const std::string& id : ids) return_sum += st.reward(id);
  }
  EpisodeResult out;
  out.metrics = st.metrics_finalize(horizon_s);
  out.mean_return = ids.empty() ? 0.0 : return_sum / static_cast<double>(ids.size());
  return out;
}

}  // namespace unicorn
