#pragma once

// Shared helpers for the test suites: canned fixtures and structured random
// network/flow generators that always satisfy the model invariants.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "unicorn/netmodel.hpp"
#include "unicorn/rng.hpp"
#include "unicorn/simcore.hpp"

namespace unicorn::testutil {

inline std::string minimal_network_json() {
  return R"({
  "lanes": [
    {"id": "in_a", "length_m": 300.0, "speed_limit_mps": 15.0, "signal_controlled": true},
    {"id": "in_b", "length_m": 300.0, "speed_limit_mps": 15.0, "signal_controlled": true},
    {"id": "out_a", "length_m": 300.0, "speed_limit_mps": 15.0, "signal_controlled": false},
    {"id": "out_b", "length_m": 300.0, "speed_limit_mps": 15.0, "signal_controlled": false}
  ],
  "intersections": [
    {
      "id": "x0",
      "incoming": ["in_a", "in_b"],
      "outgoing": ["out_a", "out_b"],
      "movements": [{"in": "in_a", "out": "out_a"}, {"in": "in_b", "out": "out_b"}],
      "phases": [[0, 1]],
      "phase_template_id": 0
    }
  ],
  "adjacency": []
})";
}

// Two-phase variant of the minimal intersection (one movement per phase).
inline Network minimal_two_phase_network() {
  NetworkBuilder b;
  b.add_lane({"in_a", 300.0, 15.0, true});
  b.add_lane({"in_b", 300.0, 15.0, true});
  b.add_lane({"out_a", 300.0, 15.0, false});
  b.add_lane({"out_b", 300.0, 15.0, false});
  Intersection x;
  x.id = "x0";
  x.incoming = {"in_a", "in_b"};
  x.outgoing = {"out_a", "out_b"};
  x.movements = {{0, "in_a", "out_a"}, {1, "in_b", "out_b"}};
  x.phases = {{0, {0}}, {1, {1}}};
  x.phase_template_id = 0;
  b.add_intersection(std::move(x));
  return b.build();
}

// Structured random network: a chain of 1..3 intersections with random entry
// and exit lanes, connector lanes between neighbors, random movements (every
// incoming lane reaches at least one border exit) and a random phase cover.
inline Network random_network(Rng& rng) {
  const int n_int = 1 + rng.uniform_int(3);
  NetworkBuilder b;

  std::vector<std::vector<std::string>> incoming(n_int), outgoing(n_int);
  std::vector<std::vector<std::string>> exits(n_int);
  auto node = [](int k) { return "x" + std::to_string(k); };

  for (int k = 0; k < n_int; ++k) {
    const int n_entry = 1 + rng.uniform_int(2);
    const int n_exit = 1 + rng.uniform_int(2);
    for (int j = 0; j < n_entry; ++j) {
      std::string id = "e" + std::to_string(k) + "_" + std::to_string(j);
      b.add_lane({id, rng.uniform(80.0, 400.0), rng.uniform(8.0, 20.0), true});
      incoming[k].push_back(id);
    }
    for (int j = 0; j < n_exit; ++j) {
      std::string id = "o" + std::to_string(k) + "_" + std::to_string(j);
      b.add_lane({id, rng.uniform(80.0, 400.0), rng.uniform(8.0, 20.0), false});
      outgoing[k].push_back(id);
      exits[k].push_back(id);
    }
  }
  for (int k = 0; k + 1 < n_int; ++k) {
    std::string fwd = "c" + std::to_string(k) + "f";
    std::string bwd = "c" + std::to_string(k) + "b";
    b.add_lane({fwd, rng.uniform(80.0, 400.0), rng.uniform(8.0, 20.0), true});
    b.add_lane({bwd, rng.uniform(80.0, 400.0), rng.uniform(8.0, 20.0), true});
    outgoing[k].push_back(fwd);
    incoming[k + 1].push_back(fwd);
    outgoing[k + 1].push_back(bwd);
    incoming[k].push_back(bwd);
    b.add_adjacency(node(k), node(k + 1));
  }

  for (int k = 0; k < n_int; ++k) {
    Intersection it;
    it.id = node(k);
    it.incoming = incoming[k];
    it.outgoing = outgoing[k];
    it.phase_template_id = rng.uniform_int(4);

    std::set<std::pair<std::string, std::string>> used;
    for (const auto& in : it.incoming) {
      // First target is always a border exit so every route can terminate.
      const std::string& exit_lane = exits[k][rng.uniform_int(static_cast<int>(exits[k].size()))];
      used.insert({in, exit_lane});
      if (rng.uniform() < 0.5) {
        const std::string& extra =
            it.outgoing[rng.uniform_int(static_cast<int>(it.outgoing.size()))];
        used.insert({in, extra});
      }
    }
    for (const auto& in : it.incoming) {
      for (const auto& out : it.outgoing) {
        if (used.count({in, out})) {
          Movement mv;
          mv.index = static_cast<int>(it.movements.size());
          mv.in_lane = in;
          mv.out_lane = out;
          it.movements.push_back(std::move(mv));
        }
      }
    }

    // Random disjoint cover of movements by 1..4 phases.
    std::vector<int> order(it.movements.size());
    for (size_t m = 0; m < order.size(); ++m) order[m] = static_cast<int>(m);
    for (size_t m = order.size(); m > 1; --m) std::swap(order[m - 1], order[rng.uniform_int(static_cast<int>(m))]);
    const int n_phases = 1 + rng.uniform_int(std::min<int>(4, static_cast<int>(order.size())));
    std::vector<Phase> phases(n_phases);
    for (int p = 0; p < n_phases; ++p) phases[p].index = p;
    for (size_t m = 0; m < order.size(); ++m)
      phases[m % n_phases].active_movements.push_back(order[m]);
    it.phases = std::move(phases);
    b.add_intersection(std::move(it));
  }
  return b.build();
}

// Random rate entries whose destination is found by walking movements from the
// origin until a border exit lane (the generator above guarantees one exists).
inline FlowSpec random_flows(const Network& net, Rng& rng, double horizon_s,
                             int max_entries = 4) {
  std::vector<std::string> entry_lanes;
  for (const auto& lid : net.lane_ids()) {
    if (net.is_entry_lane(lid) && net.lane_downstream(lid).has_value())
      entry_lanes.push_back(lid);
  }
  FlowSpec flows;
  if (entry_lanes.empty()) return flows;
  const int n = 1 + rng.uniform_int(max_entries);
  for (int k = 0; k < n; ++k) {
    std::string lane = entry_lanes[rng.uniform_int(static_cast<int>(entry_lanes.size()))];
    const std::string origin = lane;
    for (int hop = 0; hop < 32; ++hop) {
      auto down = net.lane_downstream(lane);
      if (!down) break;
      const Intersection& it = net.intersection(*down);
      std::vector<const Movement*> from_here, to_border;
      for (const Movement& mv : it.movements) {
        if (mv.in_lane != lane) continue;
        from_here.push_back(&mv);
        if (!net.lane_downstream(mv.out_lane)) to_border.push_back(&mv);
      }
      // Bias toward leaving so walks terminate; generator guarantees a border
      // option exists at every incoming lane.
      const auto& pool = (!to_border.empty() && (hop >= 4 || rng.uniform() < 0.7))
                             ? to_border
                             : (from_here.empty() ? to_border : from_here);
      lane = pool[rng.uniform_int(static_cast<int>(pool.size()))]->out_lane;
    }
    const double a = rng.uniform(0.0, horizon_s * 0.5);
    flows.rates.push_back({origin, lane, rng.uniform(1.0, 6.0), a,
                           a + rng.uniform(60.0, horizon_s - a)});
  }
  if (rng.uniform() < 0.5 && !entry_lanes.empty()) {
    // sprinkle some explicit departures on the first rate's OD pair
    for (int j = 0; j < 3; ++j)
      flows.departures.push_back(
          {flows.rates[0].origin, flows.rates[0].destination, rng.uniform(0.0, 120.0)});
  }
  return flows;
}

}  // namespace unicorn::testutil
