#pragma once

#include "unicorn/netmodel.hpp"
#include "unicorn/simcore.hpp"

namespace unicorn {

// Synthetic desk-scale scenarios. All generators produce validated Networks.
//
// Phase template catalog used by these generators:
//   0 = four-arm, 12 movements, 4 phases
//   1 = three-arm with paired lanes, 12 movements, 3 phases
//   2 = three-arm single-lane, 6 movements, 3 phases

// rows x cols grid of four-arm intersections (one lane per approach,
// 12 movements, 4 phases each). rows = cols = 1 gives an isolated four-arm.
Network make_grid_network(int rows, int cols, double lane_len_m = 300.0,
                          double speed_mps = 15.0);

// Through-traffic on every border entry: north<->south per column and
// west<->east per row, total_veh_per_min split evenly across those streams.
FlowSpec make_grid_through_flows(int rows, int cols, double total_veh_per_min, double start_s,
                                 double end_s);

// Isolated three-arm intersection with two lanes per approach:
// 6 incoming + 6 outgoing lanes, 12 movements, 3 phases.
Network make_three_arm_paired_lanes(double lane_len_m = 300.0, double speed_mps = 15.0);

// One three-arm/3-phase (6 movements) and one four-arm/4-phase (12 movements)
// intersection joined by a two-way road; exercises heterogeneous shapes.
Network make_mixed_pair_network(double lane_len_m = 300.0, double speed_mps = 15.0);
FlowSpec make_mixed_pair_flows(double total_veh_per_min, double start_s, double end_s);

// Deterministic departures into an isolated four-arm intersection (no
// randomness; handy for reconstruction-learning tests).
FlowSpec make_single_deterministic_flows(double horizon_s, double headway_s = 12.0);

}  // namespace unicorn
