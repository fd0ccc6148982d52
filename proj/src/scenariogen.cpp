#include "unicorn/scenariogen.hpp"

#include <array>
#include <string>

namespace unicorn {

namespace {

// Compass bookkeeping for generated intersections. Side order N,E,S,W is the
// document order for incoming/outgoing lists and therefore movement indexing.
enum Side { N = 0, E = 1, S = 2, W = 3 };
constexpr std::array<Side, 4> kSides = {N, E, S, W};

Side opposite(Side s) { return static_cast<Side>((s + 2) % 4); }

// Right-hand traffic: heading out of side `from`, which side does a right/left
// turn exit through?
Side right_of(Side from) { return static_cast<Side>((from + 3) % 4); }

std::string grid_node(int r, int c) { return "i" + std::to_string(r) + "_" + std::to_string(c); }

// Border tag for the far end of an approach that leaves the grid.
std::string border_tag(Side s, int r, int c) {
  switch (s) {
    case N: return "bn" + std::to_string(c);
    case S: return "bs" + std::to_string(c);
    case W: return "bw" + std::to_string(r);
    case E: return "be" + std::to_string(r);
  }
  return "";
}

std::string lane_id(const std::string& from, const std::string& to) {
  return "l_" + from + "_" + to;
}

// The endpoint on side `s` of node (r,c): a neighbor intersection or a border tag.
std::string side_endpoint(Side s, int r, int c, int rows, int cols) {
  int rr = r, cc = c;
  switch (s) {
    case N: rr = r - 1; break;
    case S: rr = r + 1; break;
    case W: cc = c - 1; break;
    case E: cc = c + 1; break;
  }
  if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return border_tag(s, r, c);
  return grid_node(rr, cc);
}

// Movements for a four-arm node: each incoming side fans out to the other
// three sides in N,E,S,W order. Returns (from_side, to_side) pairs in
// document order; the phase grouping below indexes into this list.
std::vector<std::pair<Side, Side>> four_arm_movements() {
  std::vector<std::pair<Side, Side>> mv;
  for (Side in : kSides) {
    for (Side out : kSides) {
      if (out == in) continue;  // no U-turns
      mv.push_back({in, out});
    }
  }
  return mv;
}

std::vector<Phase> four_arm_phases(const std::vector<std::pair<Side, Side>>& mv) {
  // p0: N/S straight + right, p1: N/S left, p2: E/W straight + right, p3: E/W left.
  auto classify = [](Side in, Side out) {
    if (out == opposite(in)) return 0;  // straight
    if (out == right_of(in)) return 1;  // right
    return 2;                           // left
  };
  std::vector<Phase> phases(4);
  for (int p = 0; p < 4; ++p) phases[p].index = p;
  for (size_t m = 0; m < mv.size(); ++m) {
    const auto [in, out] = mv[m];
    const bool ns = (in == N || in == S);
    const int turn = classify(in, out);
    int p;
    if (turn == 2) {
      p = ns ? 1 : 3;
    } else {
      p = ns ? 0 : 2;
    }
    phases[p].active_movements.push_back(static_cast<int>(m));
  }
  return phases;
}

}  // namespace

Network make_grid_network(int rows, int cols, double lane_len_m, double speed_mps) {
  if (rows < 1 || cols < 1) throw ValidationError("grid dimensions must be >= 1");
  NetworkBuilder b;
  const auto movements = four_arm_movements();

  // Lanes: one per (endpoint -> node) and (node -> endpoint) per side. Shared
  // internal lanes get added once; track what we have emitted.
  std::map<std::string, bool> lane_emitted;
  auto emit_lane = [&](const std::string& id, bool signal_controlled) {
    if (lane_emitted.count(id)) return;
    lane_emitted[id] = true;
    b.add_lane({id, lane_len_m, speed_mps, signal_controlled});
  };

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::string node = grid_node(r, c);
      Intersection inter;
      inter.id = node;
      inter.phase_template_id = 0;
      for (Side s : kSides) {
        const std::string far = side_endpoint(s, r, c, rows, cols);
        const std::string in_id = lane_id(far, node);
        const std::string out_id = lane_id(node, far);
        // Every lane that ends at an intersection faces a signal; border exits do not.
        emit_lane(in_id, true);
        const bool out_is_internal = far.rfind("i", 0) == 0;
        emit_lane(out_id, out_is_internal);
        inter.incoming.push_back(in_id);
        inter.outgoing.push_back(out_id);
      }
      int midx = 0;
      for (const auto& [in_s, out_s] : movements) {
        Movement mv;
        mv.index = midx++;
        mv.in_lane = inter.incoming[in_s];
        mv.out_lane = inter.outgoing[out_s];
        inter.movements.push_back(std::move(mv));
      }
      inter.phases = four_arm_phases(movements);
      b.add_intersection(std::move(inter));
    }
  }

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (r + 1 < rows) b.add_adjacency(grid_node(r, c), grid_node(r + 1, c));
      if (c + 1 < cols) b.add_adjacency(grid_node(r, c), grid_node(r, c + 1));
    }
  }
  return b.build();
}

FlowSpec make_grid_through_flows(int rows, int cols, double total_veh_per_min, double start_s,
                                 double end_s) {
  FlowSpec flows;
  const int streams = 2 * (rows + cols);
  const double rate = total_veh_per_min / streams;
  for (int c = 0; c < cols; ++c) {
    const std::string north = border_tag(N, 0, c), south = border_tag(S, rows - 1, c);
    flows.rates.push_back({lane_id(north, grid_node(0, c)),
                           lane_id(grid_node(rows - 1, c), south), rate, start_s, end_s});
    flows.rates.push_back({lane_id(south, grid_node(rows - 1, c)),
                           lane_id(grid_node(0, c), north), rate, start_s, end_s});
  }
  for (int r = 0; r < rows; ++r) {
    const std::string west = border_tag(W, r, 0), east = border_tag(E, r, cols - 1);
    flows.rates.push_back({lane_id(west, grid_node(r, 0)),
                           lane_id(grid_node(r, cols - 1), east), rate, start_s, end_s});
    flows.rates.push_back({lane_id(east, grid_node(r, cols - 1)),
                           lane_id(grid_node(r, 0), west), rate, start_s, end_s});
  }
  return flows;
}

Network make_three_arm_paired_lanes(double lane_len_m, double speed_mps) {
  // Arms W, E, S with two lanes per direction. Movement list pairs lane 0
  // with lane 0 targets and lane 1 with lane 1, giving 12 movements; phases:
  // W<->E through, W/E -> S turns, S approaches.
  NetworkBuilder b;
  const std::array<std::string, 3> arms = {"w", "e", "s"};
  for (const auto& arm : arms) {
    for (int k = 0; k < 2; ++k) {
      b.add_lane({"in_" + arm + std::to_string(k), lane_len_m, speed_mps, true});
      b.add_lane({"out_" + arm + std::to_string(k), lane_len_m, speed_mps, false});
    }
  }
  Intersection t;
  t.id = "t0";
  t.phase_template_id = 1;
  for (const auto& arm : arms) {
    for (int k = 0; k < 2; ++k) t.incoming.push_back("in_" + arm + std::to_string(k));
  }
  for (const auto& arm : arms) {
    for (int k = 0; k < 2; ++k) t.outgoing.push_back("out_" + arm + std::to_string(k));
  }
  auto add_mv = [&](const std::string& in, const std::string& out) {
    Movement mv;
    mv.index = static_cast<int>(t.movements.size());
    mv.in_lane = in;
    mv.out_lane = out;
    t.movements.push_back(std::move(mv));
  };
  // 0..3: W->E / E->W through (lane-matched)
  add_mv("in_w0", "out_e0");
  add_mv("in_w1", "out_e1");
  add_mv("in_e0", "out_w0");
  add_mv("in_e1", "out_w1");
  // 4..7: W/E -> S turns
  add_mv("in_w0", "out_s0");
  add_mv("in_w1", "out_s1");
  add_mv("in_e0", "out_s0");
  add_mv("in_e1", "out_s1");
  // 8..11: S -> W/E
  add_mv("in_s0", "out_w0");
  add_mv("in_s1", "out_w1");
  add_mv("in_s0", "out_e0");
  add_mv("in_s1", "out_e1");
  t.phases = {{0, {0, 1, 2, 3}}, {1, {4, 5, 6, 7}}, {2, {8, 9, 10, 11}}};
  b.add_intersection(std::move(t));
  return b.build();
}

Network make_mixed_pair_network(double lane_len_m, double speed_mps) {
  NetworkBuilder b;
  // Three-arm node "a": arms N, W are borders, E side connects to "b".
  // Four-arm node "b": W side connects to "a", N/E/S are borders.
  auto lane = [&](const std::string& from, const std::string& to, bool sig) {
    b.add_lane({lane_id(from, to), lane_len_m, speed_mps, sig});
  };
  lane("bn_a", "a", true);
  lane("a", "bn_a", false);
  lane("bw_a", "a", true);
  lane("a", "bw_a", false);
  lane("a", "b", true);  // connecting road
  lane("b", "a", true);
  lane("bn_b", "b", true);
  lane("b", "bn_b", false);
  lane("be_b", "b", true);
  lane("b", "be_b", false);
  lane("bs_b", "b", true);
  lane("b", "bs_b", false);

  Intersection a;
  a.id = "a";
  a.phase_template_id = 2;
  a.incoming = {lane_id("bn_a", "a"), lane_id("b", "a"), lane_id("bw_a", "a")};  // N, E, W
  a.outgoing = {lane_id("a", "bn_a"), lane_id("a", "b"), lane_id("a", "bw_a")};
  auto add_mv = [](Intersection& it, const std::string& in, const std::string& out) {
    Movement mv;
    mv.index = static_cast<int>(it.movements.size());
    mv.in_lane = in;
    mv.out_lane = out;
    it.movements.push_back(std::move(mv));
  };
  // From N: to E, W; from E: to N, W; from W: to N, E. One phase per approach.
  add_mv(a, a.incoming[0], a.outgoing[1]);
  add_mv(a, a.incoming[0], a.outgoing[2]);
  add_mv(a, a.incoming[1], a.outgoing[0]);
  add_mv(a, a.incoming[1], a.outgoing[2]);
  add_mv(a, a.incoming[2], a.outgoing[0]);
  add_mv(a, a.incoming[2], a.outgoing[1]);
  a.phases = {{0, {0, 1}}, {1, {2, 3}}, {2, {4, 5}}};
  b.add_intersection(std::move(a));

  Intersection f;
  f.id = "b";
  f.phase_template_id = 0;
  f.incoming = {lane_id("bn_b", "b"), lane_id("be_b", "b"), lane_id("bs_b", "b"),
                lane_id("a", "b")};  // N, E, S, W
  f.outgoing = {lane_id("b", "bn_b"), lane_id("b", "be_b"), lane_id("b", "bs_b"),
                lane_id("b", "a")};
  const auto movements = four_arm_movements();
  for (const auto& [in_s, out_s] : movements) add_mv(f, f.incoming[in_s], f.outgoing[out_s]);
  f.phases = four_arm_phases(movements);
  b.add_intersection(std::move(f));

  b.add_adjacency("a", "b");
  return b.build();
}

FlowSpec make_mixed_pair_flows(double total_veh_per_min, double start_s, double end_s) {
  FlowSpec flows;
  const double r = total_veh_per_min / 4.0;
  // West->East corridor and back, plus turning traffic off both north arms.
  flows.rates.push_back({lane_id("bw_a", "a"), lane_id("b", "be_b"), r, start_s, end_s});
  flows.rates.push_back({lane_id("be_b", "b"), lane_id("a", "bw_a"), r, start_s, end_s});
  flows.rates.push_back({lane_id("bn_a", "a"), lane_id("b", "bs_b"), r, start_s, end_s});
  flows.rates.push_back({lane_id("bn_b", "b"), lane_id("a", "bn_a"), r, start_s, end_s});
  return flows;
}

FlowSpec make_single_deterministic_flows(double horizon_s, double headway_s) {
  FlowSpec flows;
  // Alternating platoons from north and west into the isolated four-arm node,
  // explicit departures only so two runs are identical without seeding.
  const std::string node = grid_node(0, 0);
  const std::string from_n = lane_id(border_tag(N, 0, 0), node);
  const std::string to_s = lane_id(node, border_tag(S, 0, 0));
  const std::string from_w = lane_id(border_tag(W, 0, 0), node);
  const std::string to_e = lane_id(node, border_tag(E, 0, 0));
  int k = 0;
  for (double t = 0.0; t + 1.0 < horizon_s; t += headway_s, ++k) {
    if (k % 2 == 0) {
      flows.departures.push_back({from_n, to_s, t});
    } else {
      flows.departures.push_back({from_w, to_e, t});
    }
  }
  return flows;
}

}  // namespace unicorn
