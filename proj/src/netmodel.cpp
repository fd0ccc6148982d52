#include "unicorn/netmodel.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

namespace unicorn {

using nlohmann::json;

namespace {

// Strict-schema helper: every present key must be known, every required key present.
void check_keys(const json& obj, const std::string& where,
                const std::vector<std::string>& required,
                const std::vector<std::string>& optional = {}) {
  if (!obj.is_object()) throw ValidationError(where + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& k = it.key();
    const bool known = std::find(required.begin(), required.end(), k) != required.end() ||
                       std::find(optional.begin(), optional.end(), k) != optional.end();
    if (!known) throw ValidationError(where + ": unknown key \"" + k + "\"");
  }
  for (const auto& k : required) {
    if (!obj.contains(k)) throw ValidationError(where + ": missing key \"" + k + "\"");
  }
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ValidationError(where + ": \"" + key + "\" must be a number");
  return v.get<double>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_string() || v.get<std::string>().empty())
    throw ValidationError(where + ": \"" + key + "\" must be a non-empty string");
  return v.get<std::string>();
}

std::vector<std::string> get_string_array(const json& obj, const std::string& key,
                                          const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_array()) throw ValidationError(where + ": \"" + key + "\" must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ValidationError(where + ": \"" + key + "\" entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

const Lane& Network::lane(const std::string& id) const {
  auto it = lanes_.find(id);
  if (it == lanes_.end()) throw ValidationError("unknown lane \"" + id + "\"");
  return it->second;
}

const Intersection& Network::intersection(const std::string& id) const {
  auto it = intersections_.find(id);
  if (it == intersections_.end()) throw ValidationError("unknown intersection \"" + id + "\"");
  return it->second;
}

const std::vector<std::string>& Network::neighbors(const std::string& id) const {
  static const std::vector<std::string> kEmpty;
  if (!has_intersection(id)) throw ValidationError("unknown intersection \"" + id + "\"");
  auto it = adjacency_.find(id);
  return it == adjacency_.end() ? kEmpty : it->second;
}

std::optional<std::string> Network::lane_downstream(const std::string& lane_id) const {
  auto it = lane_downstream_.find(lane_id);
  if (it == lane_downstream_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Network::lane_upstream(const std::string& lane_id) const {
  auto it = lane_upstream_.find(lane_id);
  if (it == lane_upstream_.end()) return std::nullopt;
  return it->second;
}

bool Network::operator==(const Network& other) const {
  return lanes_ == other.lanes_ && intersections_ == other.intersections_ &&
         adjacency_ == other.adjacency_;
}

void Network::index_and_validate() {
  lane_ids_.clear();
  intersection_ids_.clear();
  lane_downstream_.clear();
  lane_upstream_.clear();
  for (const auto& [id, _] : lanes_) lane_ids_.push_back(id);
  for (const auto& [id, _] : intersections_) intersection_ids_.push_back(id);

  for (const auto& [iid, inter] : intersections_) {
    if (inter.incoming.empty())
      throw ValidationError("intersection \"" + iid + "\" has no incoming lanes");
    if (inter.phases.empty())
      throw ValidationError("intersection \"" + iid + "\" has no phases");

    std::set<std::string> in_set, out_set;
    for (const auto& l : inter.incoming) {
      if (!lanes_.count(l))
        throw ValidationError("intersection \"" + iid + "\" references unknown lane \"" + l + "\"");
      if (!in_set.insert(l).second)
        throw ValidationError("intersection \"" + iid + "\" lists incoming lane \"" + l +
                              "\" twice");
      auto [it, fresh] = lane_downstream_.emplace(l, iid);
      if (!fresh && it->second != iid)
        throw ValidationError("lane \"" + l + "\" is an incoming lane of both \"" + it->second +
                              "\" and \"" + iid + "\"");
    }
    for (const auto& l : inter.outgoing) {
      if (!lanes_.count(l))
        throw ValidationError("intersection \"" + iid + "\" references unknown lane \"" + l + "\"");
      if (!out_set.insert(l).second)
        throw ValidationError("intersection \"" + iid + "\" lists outgoing lane \"" + l +
                              "\" twice");
      if (in_set.count(l))
        throw ValidationError("intersection \"" + iid + "\" lists lane \"" + l +
                              "\" as both incoming and outgoing");
      auto [it, fresh] = lane_upstream_.emplace(l, iid);
      if (!fresh && it->second != iid)
        throw ValidationError("lane \"" + l + "\" is an outgoing lane of both \"" + it->second +
                              "\" and \"" + iid + "\"");
    }

    if (inter.movements.empty())
      throw ValidationError("intersection \"" + iid + "\" has no movements");
    std::set<std::pair<std::string, std::string>> mv_set;
    for (size_t m = 0; m < inter.movements.size(); ++m) {
      const Movement& mv = inter.movements[m];
      if (mv.index != static_cast<int>(m))
        throw ValidationError("intersection \"" + iid + "\": movement indices must be 0..n-1 in order");
      if (!in_set.count(mv.in_lane))
        throw ValidationError("intersection \"" + iid + "\": movement " + std::to_string(m) +
                              " uses \"" + mv.in_lane + "\" which is not an incoming lane");
      if (!out_set.count(mv.out_lane))
        throw ValidationError("intersection \"" + iid + "\": movement " + std::to_string(m) +
                              " uses \"" + mv.out_lane + "\" which is not an outgoing lane");
      if (!mv_set.insert({mv.in_lane, mv.out_lane}).second)
        throw ValidationError("intersection \"" + iid + "\": duplicate movement (" + mv.in_lane +
                              " -> " + mv.out_lane + ")");
    }

    std::vector<bool> covered(inter.movements.size(), false);
    for (size_t p = 0; p < inter.phases.size(); ++p) {
      const Phase& ph = inter.phases[p];
      if (ph.index != static_cast<int>(p))
        throw ValidationError("intersection \"" + iid + "\": phase indices must be 0..n-1 in order");
      if (ph.active_movements.empty())
        throw ValidationError("intersection \"" + iid + "\": phase " + std::to_string(p) +
                              " activates no movements");
      std::set<int> seen;
      for (int m : ph.active_movements) {
        if (m < 0 || m >= static_cast<int>(inter.movements.size()))
          throw ValidationError("intersection \"" + iid + "\": phase " + std::to_string(p) +
                                " references movement " + std::to_string(m) + " out of range");
        if (!seen.insert(m).second)
          throw ValidationError("intersection \"" + iid + "\": phase " + std::to_string(p) +
                                " lists movement " + std::to_string(m) + " twice");
        covered[m] = true;
      }
    }
    for (size_t m = 0; m < covered.size(); ++m) {
      if (!covered[m])
        throw ValidationError("intersection \"" + iid + "\": movement " + std::to_string(m) +
                              " is not active in any phase");
    }

    if (inter.phase_template_id < 0)
      throw ValidationError("intersection \"" + iid + "\": phase_template_id must be >= 0");
  }

  // Adjacency symmetry is enforced structurally (pairs insert both directions);
  // here we check the edges reference real intersections and sort them.
  for (auto& [id, nbrs] : adjacency_) {
    if (!intersections_.count(id))
      throw ValidationError("adjacency references unknown intersection \"" + id + "\"");
    for (const auto& n : nbrs) {
      if (!intersections_.count(n))
        throw ValidationError("adjacency references unknown intersection \"" + n + "\"");
    }
    std::sort(nbrs.begin(), nbrs.end());
  }

  // A movement's out lane must leave the network or feed a declared neighbor.
  for (const auto& [iid, inter] : intersections_) {
    for (const Movement& mv : inter.movements) {
      auto down = lane_downstream(mv.out_lane);
      if (!down) continue;  // border lane, vehicles exit here
      if (*down == iid)
        throw ValidationError("intersection \"" + iid + "\": movement (" + mv.in_lane + " -> " +
                              mv.out_lane + ") loops back into the same intersection");
      const auto& nbrs = neighbors(iid);
      if (!std::binary_search(nbrs.begin(), nbrs.end(), *down))
        throw ValidationError("intersection \"" + iid + "\": movement out lane \"" + mv.out_lane +
                              "\" feeds \"" + *down + "\" which is not listed as adjacent");
    }
  }

  for (const auto& [lid, lane] : lanes_) {
    if (lane.length_m <= 0.0)
      throw ValidationError("lane \"" + lid + "\": length_m must be positive");
    if (lane.speed_limit_mps <= 0.0)
      throw ValidationError("lane \"" + lid + "\": speed_limit_mps must be positive");
  }
}

NetworkBuilder& NetworkBuilder::add_lane(Lane lane) {
  lanes_.push_back(std::move(lane));
  return *this;
}

NetworkBuilder& NetworkBuilder::add_intersection(Intersection inter) {
  intersections_.push_back(std::move(inter));
  return *this;
}

NetworkBuilder& NetworkBuilder::add_adjacency(const std::string& a, const std::string& b) {
  adjacency_.emplace_back(a, b);
  return *this;
}

Network NetworkBuilder::build() {
  Network net;
  for (auto& l : lanes_) {
    const std::string id = l.id;
    if (!net.lanes_.emplace(id, std::move(l)).second)
      throw ValidationError("duplicate lane id \"" + id + "\"");
  }
  for (auto& i : intersections_) {
    const std::string id = i.id;
    if (net.lanes_.count(id))
      throw ValidationError("id \"" + id + "\" used for both a lane and an intersection");
    if (!net.intersections_.emplace(id, std::move(i)).second)
      throw ValidationError("duplicate intersection id \"" + id + "\"");
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [a, b] : adjacency_) {
    if (a == b) throw ValidationError("adjacency pair (" + a + ", " + a + ") is a self loop");
    auto key = std::minmax(a, b);
    if (!seen.insert({key.first, key.second}).second)
      throw ValidationError("duplicate adjacency pair (" + key.first + ", " + key.second + ")");
    net.adjacency_[a].push_back(b);
    net.adjacency_[b].push_back(a);
  }
  net.index_and_validate();
  return net;
}

Network parse_network(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("network JSON syntax error at line " + std::to_string(line) + ", column " +
                     std::to_string(col));
  }

  check_keys(doc, "network", {"lanes", "intersections", "adjacency"});
  if (!doc["lanes"].is_array() || !doc["intersections"].is_array() || !doc["adjacency"].is_array())
    throw ValidationError("network: \"lanes\", \"intersections\" and \"adjacency\" must be arrays");

  NetworkBuilder builder;
  for (const auto& jl : doc["lanes"]) {
    check_keys(jl, "lane", {"id", "length_m", "speed_limit_mps", "signal_controlled"});
    Lane lane;
    lane.id = get_string(jl, "id", "lane");
    const std::string where = "lane \"" + lane.id + "\"";
    lane.length_m = get_number(jl, "length_m", where);
    lane.speed_limit_mps = get_number(jl, "speed_limit_mps", where);
    if (!jl.at("signal_controlled").is_boolean())
      throw ValidationError(where + ": \"signal_controlled\" must be a boolean");
    lane.signal_controlled = jl.at("signal_controlled").get<bool>();
    builder.add_lane(std::move(lane));
  }

  for (const auto& ji : doc["intersections"]) {
    check_keys(ji, "intersection",
               {"id", "incoming", "outgoing", "movements", "phases", "phase_template_id"});
    Intersection inter;
    inter.id = get_string(ji, "id", "intersection");
    const std::string where = "intersection \"" + inter.id + "\"";
    inter.incoming = get_string_array(ji, "incoming", where);
    inter.outgoing = get_string_array(ji, "outgoing", where);

    if (!ji.at("movements").is_array())
      throw ValidationError(where + ": \"movements\" must be an array");
    int midx = 0;
    for (const auto& jm : ji.at("movements")) {
      check_keys(jm, where + " movement", {"in", "out"});
      Movement mv;
      mv.index = midx++;
      mv.in_lane = get_string(jm, "in", where + " movement");
      mv.out_lane = get_string(jm, "out", where + " movement");
      inter.movements.push_back(std::move(mv));
    }

    if (!ji.at("phases").is_array())
      throw ValidationError(where + ": \"phases\" must be an array");
    int pidx = 0;
    for (const auto& jp : ji.at("phases")) {
      if (!jp.is_array())
        throw ValidationError(where + ": each phase must be an array of movement indices");
      Phase ph;
      ph.index = pidx++;
      for (const auto& jv : jp) {
        if (!jv.is_number_integer())
          throw ValidationError(where + ": phase entries must be integer movement indices");
        ph.active_movements.push_back(jv.get<int>());
      }
      inter.phases.push_back(std::move(ph));
    }

    const json& jt = ji.at("phase_template_id");
    if (!jt.is_number_integer())
      throw ValidationError(where + ": \"phase_template_id\" must be an integer");
    inter.phase_template_id = jt.get<int>();
    builder.add_intersection(std::move(inter));
  }

  for (const auto& ja : doc["adjacency"]) {
    if (!ja.is_array() || ja.size() != 2 || !ja[0].is_string() || !ja[1].is_string())
      throw ValidationError("adjacency entries must be [id, id] pairs");
    builder.add_adjacency(ja[0].get<std::string>(), ja[1].get<std::string>());
  }

  return builder.build();
}

std::string serialize_network(const Network& net) {
  json doc;
  doc["lanes"] = json::array();
  for (const auto& lid : net.lane_ids()) {
    const Lane& l = net.lane(lid);
    doc["lanes"].push_back({{"id", l.id},
                            {"length_m", l.length_m},
                            {"speed_limit_mps", l.speed_limit_mps},
                            {"signal_controlled", l.signal_controlled}});
  }
  doc["intersections"] = json::array();
  for (const auto& iid : net.intersection_ids()) {
    const Intersection& it = net.intersection(iid);
    json ji;
    ji["id"] = it.id;
    ji["incoming"] = it.incoming;
    ji["outgoing"] = it.outgoing;
    ji["movements"] = json::array();
    for (const Movement& mv : it.movements)
      ji["movements"].push_back({{"in", mv.in_lane}, {"out", mv.out_lane}});
    ji["phases"] = json::array();
    for (const Phase& ph : it.phases) ji["phases"].push_back(ph.active_movements);
    ji["phase_template_id"] = it.phase_template_id;
    doc["intersections"].push_back(std::move(ji));
  }
  doc["adjacency"] = json::array();
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& iid : net.intersection_ids()) {
    for (const auto& n : net.neighbors(iid)) {
      auto key = std::minmax(iid, n);
      edges.insert({key.first, key.second});
    }
  }
  for (const auto& [a, b] : edges) doc["adjacency"].push_back({a, b});
  return doc.dump(2) + "\n";
}

Mat phase_table(const Network& net, const std::string& intersection_id) {
  const Intersection& inter = net.intersection(intersection_id);
  Mat table(static_cast<int>(inter.phases.size()), static_cast<int>(inter.movements.size()));
  for (const Phase& ph : inter.phases) {
    for (int m : ph.active_movements) table.at(ph.index, m) = 1.0;
  }
  return table;
}

std::vector<double> topology_vector(const Network& net, const std::string& intersection_id,
                                    int catalog_size) {
  const Intersection& inter = net.intersection(intersection_id);
  if (catalog_size <= 0) throw ValidationError("catalog_size must be positive");
  if (inter.phase_template_id >= catalog_size)
    throw ValidationError("intersection \"" + intersection_id + "\": phase_template_id " +
                          std::to_string(inter.phase_template_id) + " outside catalog of size " +
                          std::to_string(catalog_size));

  std::vector<double> out(static_cast<size_t>(catalog_size) + 7, 0.0);
  out[inter.phase_template_id] = 1.0;

  double len_in = 0.0, spd_in = 0.0, len_out = 0.0, spd_out = 0.0;
  for (const auto& l : inter.incoming) {
    len_in += net.lane(l).length_m;
    spd_in += net.lane(l).speed_limit_mps;
  }
  for (const auto& l : inter.outgoing) {
    len_out += net.lane(l).length_m;
    spd_out += net.lane(l).speed_limit_mps;
  }
  const double n_in = static_cast<double>(inter.incoming.size());
  const double n_out = static_cast<double>(inter.outgoing.size());
  size_t k = static_cast<size_t>(catalog_size);
  out[k + 0] = n_in > 0 ? len_in / n_in : 0.0;
  out[k + 1] = n_in > 0 ? spd_in / n_in : 0.0;
  out[k + 2] = n_in;
  out[k + 3] = static_cast<double>(inter.movements.size());
  out[k + 4] = n_out > 0 ? len_out / n_out : 0.0;
  out[k + 5] = n_out > 0 ? spd_out / n_out : 0.0;
  out[k + 6] = n_out;
  return out;
}

}  // namespace unicorn
