#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unicorn/common.hpp"

namespace unicorn {

struct Lane {
  std::string id;
  double length_m = 0.0;
  double speed_limit_mps = 0.0;
  bool signal_controlled = false;

  bool operator==(const Lane&) const = default;
};

// A movement is one (incoming lane -> outgoing lane) pair at an intersection.
// Index is the position in the intersection's movement list; orderings are
// file order and are part of the model (state rows, phase columns).
struct Movement {
  int index = 0;
  std::string in_lane;
  std::string out_lane;

  bool operator==(const Movement&) const = default;
};

struct Phase {
  int index = 0;
  std::vector<int> active_movements;  // movement indices, file order, unique

  bool operator==(const Phase&) const = default;
};

struct Intersection {
  std::string id;
  std::vector<std::string> incoming;  // lane ids, file order
  std::vector<std::string> outgoing;
  std::vector<Movement> movements;
  std::vector<Phase> phases;
  int phase_template_id = 0;

  bool operator==(const Intersection&) const = default;
};

// Parsed and validated road network. Lookups are by id; iteration orders are
// sorted so every consumer is deterministic.
class Network {
 public:
  const Lane& lane(const std::string& id) const;
  const Intersection& intersection(const std::string& id) const;
  bool has_lane(const std::string& id) const { return lanes_.count(id) > 0; }
  bool has_intersection(const std::string& id) const { return intersections_.count(id) > 0; }

  const std::vector<std::string>& lane_ids() const { return lane_ids_; }
  const std::vector<std::string>& intersection_ids() const { return intersection_ids_; }

  // Intersection ids adjacent to `id`, sorted ascending. Symmetric by construction.
  const std::vector<std::string>& neighbors(const std::string& id) const;

  // Intersection that consumes this lane (the one listing it as incoming), if any.
  std::optional<std::string> lane_downstream(const std::string& lane_id) const;
  // Intersection that produces this lane (the one listing it as outgoing), if any.
  std::optional<std::string> lane_upstream(const std::string& lane_id) const;

  // A lane no intersection feeds: vehicles can only appear here from outside.
  bool is_entry_lane(const std::string& lane_id) const {
    return !lane_upstream(lane_id).has_value();
  }

  bool operator==(const Network& other) const;

 private:
  friend Network parse_network(const std::string& text);
  friend class NetworkBuilder;

  void index_and_validate();

  std::map<std::string, Lane> lanes_;
  std::map<std::string, Intersection> intersections_;
  std::map<std::string, std::vector<std::string>> adjacency_;
  std::map<std::string, std::string> lane_downstream_;
  std::map<std::string, std::string> lane_upstream_;
  std::vector<std::string> lane_ids_;
  std::vector<std::string> intersection_ids_;
};

// Programmatic construction path (scenario generators, tests). Runs the same
// validation as the file parser.
class NetworkBuilder {
 public:
  NetworkBuilder& add_lane(Lane lane);
  NetworkBuilder& add_intersection(Intersection inter);
  NetworkBuilder& add_adjacency(const std::string& a, const std::string& b);
  Network build();

 private:
  std::vector<Lane> lanes_;
  std::vector<Intersection> intersections_;
  std::vector<std::pair<std::string, std::string>> adjacency_;
};

// Parses the JSON network format. Rejects unknown keys; throws ParseError with
// line/column for syntax problems and ValidationError for semantic ones.
Network parse_network(const std::string& text);

// Canonical JSON serialization; parse(serialize(parse(doc))) == parse(doc).
std::string serialize_network(const Network& net);

// |P| x |M| binary matrix; entry (p, m) = 1 iff movement m is active in phase p.
Mat phase_table(const Network& net, const std::string& intersection_id);

// Static descriptor of an intersection:
//   [one_hot(phase_template_id, catalog_size),
//    mean_in_length, mean_in_speed, n_in_lanes, n_movements,
//    mean_out_length, mean_out_speed, n_out_lanes]
std::vector<double> topology_vector(const Network& net, const std::string& intersection_id,
                                    int catalog_size);

}  // namespace unicorn
