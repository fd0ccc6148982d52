#pragma once

#include <functional>
#include <map>
#include <string>

#include "unicorn/simcore.hpp"

namespace unicorn {

enum class ControllerKind { kFixedTime, kGreedy, kMaxPressure };

ControllerKind parse_controller(const std::string& name);  // fixed|greedy|maxpressure
std::string controller_name(ControllerKind kind);

// Classical signal controllers sharing the simulator's action interface.
// Greedy and Max-Pressure read only detector-ranged queue counts, so traffic
// beyond sensor range never changes a decision; fixed-time reads nothing but
// its own cycle position. All three are pure given (state, step index).
struct ControllerState {
  ControllerKind kind = ControllerKind::kFixedTime;
  bool pressure_sum = false;  // Max-Pressure aggregates by sum instead of mean
  std::map<std::string, int> cursor;  // fixed-time cycle position, < |P_i|
};

// Cycles phases in file order, one decision interval each.
int fixed_time_action(ControllerState& ctrl, const Network& net,
                      const std::string& intersection, long step);

// Argmax over phases of the summed stopped-vehicle count on the incoming
// lanes of the phase's movements; ties resolve to the lowest phase index.
int greedy_action(const SimState& st, const std::string& intersection);

// Argmax over phases of the mean (or summed) per-movement pressure,
// queue(in_lane) - queue(out_lane); ties resolve to the lowest phase index.
int max_pressure_action(const SimState& st, const std::string& intersection,
                        bool sum_over_movements = false);

int controller_action(ControllerState& ctrl, const SimState& st,
                      const std::string& intersection, long step);

// Per-intersection phase picker: (state, intersection id, decision step).
using ActionFn = std::function<int(const SimState&, const std::string&, long)>;

struct EpisodeResult {
  MetricsReport metrics;
  double mean_return = 0.0;  // mean over intersections of summed step rewards
};

// Drives one episode: at every decision boundary asks `pick` for each
// intersection's phase, applies them, advances one decision interval, and
// accrues each intersection's reward. Deterministic given all arguments.
EpisodeResult run_episode(const Network& net, const FlowSpec& flows, const SimConfig& sim,
                          uint64_t seed, double horizon_s, const ActionFn& pick);

}  // namespace unicorn
