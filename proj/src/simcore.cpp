#include "unicorn/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace unicorn {

using nlohmann::json;

const char* kMetricsCsvHeader =
    "scenario,seed,queue_len_mean,queue_len_std,speed_mean,speed_std,int_delay_mean,"
    "int_delay_std,completion_rate,trip_time_mean,trip_time_std,trip_delay_mean,trip_delay_std";

std::string metrics_csv_row(const std::string& scenario, const std::string& seed,
                            const MetricsReport& r) {
  std::ostringstream out;
  out << scenario << ',' << seed << ',' << csv_double(r.queue_len_mean) << ','
      << csv_double(r.queue_len_std) << ',' << csv_double(r.speed_mean) << ','
      << csv_double(r.speed_std) << ',' << csv_double(r.int_delay_mean) << ','
      << csv_double(r.int_delay_std) << ',' << csv_double(r.completion_rate) << ','
      << csv_double(r.trip_time_mean) << ',' << csv_double(r.trip_time_std) << ','
      << csv_double(r.trip_delay_mean) << ',' << csv_double(r.trip_delay_std);
  return out.str();
}

FlowSpec parse_flows(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("flow JSON syntax error at line " + std::to_string(line) + ", column " +
                     std::to_string(col));
  }
  if (!doc.is_object()) throw ValidationError("flows: expected a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "rates" && it.key() != "departures")
      throw ValidationError("flows: unknown key \"" + it.key() + "\"");
  }

  FlowSpec flows;
  if (doc.contains("rates")) {
    if (!doc["rates"].is_array()) throw ValidationError("flows: \"rates\" must be an array");
    for (const auto& jr : doc["rates"]) {
      for (auto it = jr.begin(); it != jr.end(); ++it) {
        static const std::set<std::string> keys = {"origin", "destination", "veh_per_min",
                                                   "start_s", "end_s"};
        if (!keys.count(it.key()))
          throw ValidationError("flows rate entry: unknown key \"" + it.key() + "\"");
      }
      FlowRate r;
      r.origin = jr.at("origin").get<std::string>();
      r.destination = jr.at("destination").get<std::string>();
      r.veh_per_min = jr.at("veh_per_min").get<double>();
      r.start_s = jr.at("start_s").get<double>();
      r.end_s = jr.at("end_s").get<double>();
      if (r.veh_per_min < 0.0)
        throw ValidationError("flows rate entry: veh_per_min must be >= 0");
      if (!(r.start_s < r.end_s))
        throw ValidationError("flows rate entry: start_s must be < end_s");
      flows.rates.push_back(std::move(r));
    }
  }
  if (doc.contains("departures")) {
    if (!doc["departures"].is_array())
      throw ValidationError("flows: \"departures\" must be an array");
    for (const auto& jd : doc["departures"]) {
      for (auto it = jd.begin(); it != jd.end(); ++it) {
        static const std::set<std::string> keys = {"origin", "destination", "depart_s"};
        if (!keys.count(it.key()))
          throw ValidationError("flows departure entry: unknown key \"" + it.key() + "\"");
      }
      FlowDeparture d;
      d.origin = jd.at("origin").get<std::string>();
      d.destination = jd.at("destination").get<std::string>();
      d.depart_s = jd.at("depart_s").get<double>();
      if (d.depart_s < 0.0) throw ValidationError("flows departure entry: depart_s must be >= 0");
      flows.departures.push_back(std::move(d));
    }
  }
  return flows;
}

std::string serialize_flows(const FlowSpec& flows) {
  json doc;
  doc["rates"] = json::array();
  for (const auto& r : flows.rates) {
    doc["rates"].push_back({{"origin", r.origin},
                            {"destination", r.destination},
                            {"veh_per_min", r.veh_per_min},
                            {"start_s", r.start_s},
                            {"end_s", r.end_s}});
  }
  doc["departures"] = json::array();
  for (const auto& d : flows.departures) {
    doc["departures"].push_back(
        {{"origin", d.origin}, {"destination", d.destination}, {"depart_s", d.depart_s}});
  }
  return doc.dump(2) + "\n";
}

SimState::SimState(const Network& net, FlowSpec flows, SimConfig cfg, uint64_t seed)
    : net_(&net), flows_(std::move(flows)), cfg_(cfg), rng_(seed) {
  if (cfg_.tick_s <= 0.0) throw ConfigError("tick_s must be positive");
  const double ratio = cfg_.decision_interval_s / cfg_.tick_s;
  ticks_per_decision_ = static_cast<int64_t>(std::llround(ratio));
  if (ticks_per_decision_ < 1 ||
      std::abs(ratio - static_cast<double>(ticks_per_decision_)) > 1e-9)
    throw ConfigError("decision_interval_s must be a positive multiple of tick_s");
  if (cfg_.yellow_s < 0.0 || cfg_.yellow_s >= cfg_.decision_interval_s)
    throw ConfigError("yellow_s must be in [0, decision_interval_s)");
  if (cfg_.vehicle_len_m <= 0.0 || cfg_.saturation_headway_s <= 0.0 ||
      cfg_.detector_range_m <= 0.0)
    throw ConfigError("vehicle_len_m, saturation_headway_s, detector_range_m must be positive");

  for (const auto& lid : net_->lane_ids()) lanes_[lid];
  for (const auto& iid : net_->intersection_ids()) {
    SignalController c;
    c.current_phase = 0;
    c.green_remaining = cfg_.decision_interval_s;
    controllers_[iid] = c;
  }

  // Validate flow endpoints up front and warm the route cache so unreachable
  // destinations fail here, not mid-episode.
  auto check_entry = [&](const std::string& origin, const std::string& dest) {
    if (!net_->has_lane(origin)) throw ValidationError("flow origin lane \"" + origin + "\" unknown");
    if (!net_->has_lane(dest))
      throw ValidationError("flow destination lane \"" + dest + "\" unknown");
    if (!net_->is_entry_lane(origin))
      throw ValidationError("flow origin \"" + origin + "\" is not a network-entry lane");
    route_for(origin, dest);
  };
  for (const auto& r : flows_.rates) check_entry(r.origin, r.destination);
  for (const auto& d : flows_.departures) check_entry(d.origin, d.destination);

  sorted_departures_.resize(flows_.departures.size());
  for (size_t i = 0; i < sorted_departures_.size(); ++i) sorted_departures_[i] = i;
  std::stable_sort(sorted_departures_.begin(), sorted_departures_.end(),
                   [&](size_t a, size_t b) {
                     return flows_.departures[a].depart_s < flows_.departures[b].depart_s;
                   });
}

SimState init_sim(const Network& net, FlowSpec flows, SimConfig cfg, uint64_t seed) {
  return SimState(net, std::move(flows), cfg, seed);
}

bool SimState::on_decision_boundary() const {
  return tick_index_ % ticks_per_decision_ == 0;
}

void SimState::apply_actions(const std::map<std::string, int>& actions) {
  if (!on_decision_boundary())
    throw ValidationError("apply_actions called off a decision boundary (clock " +
                          std::to_string(clock()) + ")");
  for (const auto& [iid, phase] : actions) {
    const Intersection& inter = net_->intersection(iid);
    if (phase < 0 || phase >= static_cast<int>(inter.phases.size()))
      throw ValidationError("intersection \"" + iid + "\": phase index " +
                            std::to_string(phase) + " out of range");
    SignalController& ctl = controllers_.at(iid);
    if (phase == ctl.current_phase && !ctl.pending_phase.has_value()) {
      ctl.yellow_remaining = 0.0;
      ctl.green_remaining = cfg_.decision_interval_s;
    } else if (phase == ctl.current_phase) {
      // mid-yellow boundary cannot occur on boundaries (yellow < interval)
      ctl.pending_phase.reset();
      ctl.yellow_remaining = 0.0;
      ctl.green_remaining = cfg_.decision_interval_s;
    } else {
      ctl.pending_phase = phase;
      ctl.yellow_remaining = cfg_.yellow_s;
      ctl.green_remaining = 0.0;
    }
  }
}

const SignalController& SimState::controller(const std::string& intersection_id) const {
  auto it = controllers_.find(intersection_id);
  if (it == controllers_.end())
    throw ValidationError("unknown intersection \"" + intersection_id + "\"");
  return it->second;
}

bool SimState::in_yellow(const std::string& intersection_id) const {
  return controller(intersection_id).yellow_remaining > 0.0;
}

const std::deque<long>& SimState::lane_vehicles(const std::string& lane_id) const {
  auto it = lanes_.find(lane_id);
  if (it == lanes_.end()) throw ValidationError("unknown lane \"" + lane_id + "\"");
  return it->second.vehicles;
}

const Vehicle& SimState::vehicle(long id) const {
  auto it = vehicles_.find(id);
  if (it == vehicles_.end()) throw ValidationError("unknown vehicle id");
  return it->second;
}

bool SimState::lane_has_space(const std::string& lane_id) const {
  const LaneRt& rt = lanes_.at(lane_id);
  const double used = static_cast<double>(rt.vehicles.size()) * cfg_.vehicle_len_m;
  return used + cfg_.vehicle_len_m <= net_->lane(lane_id).length_m + 1e-9;
}

const std::vector<std::string>& SimState::route_for(const std::string& origin,
                                                    const std::string& destination) {
  auto key = std::make_pair(origin, destination);
  auto hit = route_cache_.find(key);
  if (hit != route_cache_.end()) return hit->second;

  // Dijkstra over the lane graph; edge lane->next exists when the consuming
  // intersection has that movement. Cost = free-flow traversal time.
  std::map<std::string, double> dist;
  std::map<std::string, std::string> prev;
  using Item = std::pair<double, std::string>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  auto fft = [&](const std::string& l) {
    const Lane& lane = net_->lane(l);
    return lane.length_m / lane.speed_limit_mps;
  };
  dist[origin] = fft(origin);
  heap.push({dist[origin], origin});
  while (!heap.empty()) {
    auto [d, lane] = heap.top();
    heap.pop();
    if (d > dist[lane] + 1e-12) continue;
    if (lane == destination) break;
    auto down = net_->lane_downstream(lane);
    if (!down) continue;
    for (const Movement& mv : net_->intersection(*down).movements) {
      if (mv.in_lane != lane) continue;
      const double nd = d + fft(mv.out_lane);
      auto it = dist.find(mv.out_lane);
      if (it == dist.end() || nd < it->second - 1e-12) {
        dist[mv.out_lane] = nd;
        prev[mv.out_lane] = lane;
        heap.push({nd, mv.out_lane});
      }
    }
  }
  if (!dist.count(destination))
    throw ValidationError("no route from \"" + origin + "\" to \"" + destination + "\"");
  std::vector<std::string> route;
  for (std::string at = destination;; at = prev.at(at)) {
    route.push_back(at);
    if (at == origin) break;
  }
  std::reverse(route.begin(), route.end());
  return route_cache_.emplace(key, std::move(route)).first->second;
}

double SimState::route_free_flow_time(const std::vector<std::string>& route) const {
  double t = 0.0;
  for (const auto& l : route) {
    const Lane& lane = net_->lane(l);
    t += lane.length_m / lane.speed_limit_mps;
  }
  return t;
}

void SimState::spawn(const std::string& origin, const std::string& destination,
                     std::vector<Event>& events) {
  if (!lane_has_space(origin)) {
    ++dropped_;  // saturated entry: the arrival never materializes
    return;
  }
  Vehicle v;
  v.id = next_vehicle_id_++;
  v.route = route_for(origin, destination);
  v.route_pos = 0;
  v.lane_offset = 0.0;
  v.state = VehicleState::Moving;
  v.depart_time = clock();
  v.free_flow_time = route_free_flow_time(v.route);
  lanes_.at(origin).vehicles.push_back(v.id);
  events.push_back({clock(), EventKind::Inject, "", origin, v.id, -1});
  vehicles_.emplace(v.id, std::move(v));
  ++injected_;
}

void SimState::inject(std::vector<Event>& events) {
  const double t0 = clock();
  const double t1 = t0 + cfg_.tick_s;
  for (const auto& r : flows_.rates) {
    if (t0 < r.start_s || t0 >= r.end_s) continue;
    double expect = r.veh_per_min * cfg_.tick_s / 60.0;
    while (expect >= 1.0) {  // heavy flows: deterministic part + Bernoulli remainder
      spawn(r.origin, r.destination, events);
      expect -= 1.0;
    }
    if (expect > 0.0 && rng_.uniform() < expect) spawn(r.origin, r.destination, events);
  }
  // Explicit departures fire on the tick covering [t0, t1).
  while (departure_cursor_ < sorted_departures_.size()) {
    const FlowDeparture& d = flows_.departures[sorted_departures_[departure_cursor_]];
    if (d.depart_s >= t1) break;
    spawn(d.origin, d.destination, events);
    ++departure_cursor_;
  }
}

void SimState::move_vehicles(std::vector<Event>& events) {
  for (auto& [lid, rt] : lanes_) {
    const Lane& lane = net_->lane(lid);
    const double advance = lane.speed_limit_mps * cfg_.tick_s;
    // Front-to-back: index 0 is nearest the stop line. Queued vehicles sit at
    // the head of the deque; moving ones follow in offset order.
    for (size_t k = 0; k < rt.vehicles.size(); ++k) {
      Vehicle& v = vehicles_.at(rt.vehicles[k]);
      if (v.state != VehicleState::Moving) continue;
      const double barrier =
          lane.length_m - static_cast<double>(rt.queued) * cfg_.vehicle_len_m;
      const bool last_leg = v.route_pos + 1 == static_cast<int>(v.route.size());
      double target = v.lane_offset + advance;
      if (last_leg && rt.queued == 0 && target >= lane.length_m - 1e-9) {
        // Reaches the end of its final lane this tick: trip complete, with a
        // sub-tick arrival time so free-flow trips have exact durations.
        const double dt = (lane.length_m - v.lane_offset) / lane.speed_limit_mps;
        const double arrive = clock() + std::min(dt, cfg_.tick_s);
        trips_.push_back({v.id, v.depart_time, arrive, v.free_flow_time});
        events.push_back({arrive, EventKind::Complete, "", lid, v.id, -1});
        vehicles_.erase(v.id);
        rt.vehicles.erase(rt.vehicles.begin() + static_cast<long>(k));
        --k;
        continue;
      }
      if (target >= barrier - 1e-9) {
        // Joins the back of the queue (possibly the stop line itself). If the
        // queue tail moved below this vehicle within the same tick it simply
        // stops where it is; slide-up re-spaces the stack later.
        const double stop_at = std::max(barrier, v.lane_offset);
        v.displacement_tick += stop_at - v.lane_offset;
        v.lane_offset = stop_at;
        v.state = VehicleState::Queued;
        rt.queued += 1;
      } else {
        v.displacement_tick += target - v.lane_offset;
        v.lane_offset = target;
      }
      if (v.displacement_tick > 1e-12) {
        v.moved_tick = true;
        v.current_wait = 0.0;  // moved this tick; waiting starts next tick
      }
    }
  }
}

bool SimState::movement_green(const std::string& in_lane, const std::string& out_lane) const {
  auto down = net_->lane_downstream(in_lane);
  if (!down) return false;
  const SignalController& ctl = controllers_.at(*down);
  if (ctl.yellow_remaining > 0.0) return false;  // whole node holds during yellow
  const Intersection& inter = net_->intersection(*down);
  const Phase& phase = inter.phases[static_cast<size_t>(ctl.current_phase)];
  for (int m : phase.active_movements) {
    const Movement& mv = inter.movements[static_cast<size_t>(m)];
    if (mv.in_lane == in_lane && mv.out_lane == out_lane) return true;
  }
  return false;
}

void SimState::discharge(std::vector<Event>& events) {
  for (auto& [lid, rt] : lanes_) {
    if (rt.queued == 0) {
      rt.discharge_credit = 0.0;
      continue;
    }
    const Lane& lane = net_->lane(lid);
    // Close the gap after a vehicle leaves the head: the stack re-spaces from
    // the stop line. Repositioning, not motion — waiting clocks keep running.
    auto pop_and_slide = [&]() {
      rt.vehicles.pop_front();
      rt.queued -= 1;
      for (int k = 0; k < rt.queued; ++k) {
        Vehicle& q = vehicles_.at(rt.vehicles[static_cast<size_t>(k)]);
        q.lane_offset = lane.length_m - static_cast<double>(k) * cfg_.vehicle_len_m;
      }
    };
    // Headway credit accrues once per tick, and only while the front vehicle
    // is actually serviceable — red or blocked time is never banked into a
    // green-onset burst. Each crossing costs one full credit.
    bool accrued = false;
    while (rt.queued > 0) {
      Vehicle& v = vehicles_.at(rt.vehicles.front());
      if (v.lane_offset < lane.length_m - 1e-9) break;  // head not at stop line
      const bool last_leg = v.route_pos + 1 == static_cast<int>(v.route.size());
      if (last_leg) {
        // Destination reached at the stop line: leaves the roadway outright.
        trips_.push_back({v.id, v.depart_time, clock(), v.free_flow_time});
        events.push_back({clock(), EventKind::Complete, "", lid, v.id, -1});
        vehicles_.erase(v.id);
        pop_and_slide();
        continue;
      }
      const std::string& next_lane = v.route[static_cast<size_t>(v.route_pos) + 1];
      if (!movement_green(lid, next_lane) || !lane_has_space(next_lane)) {
        rt.discharge_credit = 0.0;
        break;
      }
      if (!accrued) {
        rt.discharge_credit += cfg_.tick_s / cfg_.saturation_headway_s;
        accrued = true;
      }
      if (rt.discharge_credit < 1.0 - 1e-12) break;
      rt.discharge_credit -= 1.0;
      v.route_pos += 1;
      v.lane_offset = 0.0;
      v.state = VehicleState::Moving;
      v.moved_tick = true;
      v.current_wait = 0.0;
      lanes_.at(next_lane).vehicles.push_back(v.id);
      events.push_back({clock(), EventKind::Discharge, "", lid, v.id, -1});
      pop_and_slide();
    }
    if (rt.discharge_credit > 1.0) rt.discharge_credit = 1.0;
  }
}

void SimState::advance_signals(std::vector<Event>& events) {
  for (auto& [iid, ctl] : controllers_) {
    if (ctl.yellow_remaining > 0.0) {
      ctl.yellow_remaining = std::max(0.0, ctl.yellow_remaining - cfg_.tick_s);
      if (ctl.yellow_remaining == 0.0 && ctl.pending_phase.has_value()) {
        ctl.current_phase = *ctl.pending_phase;
        ctl.pending_phase.reset();
        ctl.green_remaining = cfg_.decision_interval_s - cfg_.yellow_s;
        events.push_back(
            {clock() + cfg_.tick_s, EventKind::GreenStart, iid, "", -1, ctl.current_phase});
      }
    } else {
      ctl.green_remaining = std::max(0.0, ctl.green_remaining - cfg_.tick_s);
    }
  }
}

std::vector<Event> SimState::tick() {
  std::vector<Event> events;
  // Yellow onsets are visible at the start of the tick that begins the hold.
  if (on_decision_boundary()) {
    for (const auto& [iid, ctl] : controllers_) {
      if (ctl.yellow_remaining > 0.0 && ctl.pending_phase.has_value())
        events.push_back({clock(), EventKind::YellowStart, iid, "", -1, *ctl.pending_phase});
    }
  }

  for (auto& [vid, v] : vehicles_) {
    v.moved_tick = false;
    v.displacement_tick = 0.0;
  }

  inject(events);
  move_vehicles(events);
  discharge(events);

  // Wait bookkeeping: anything queued that did not move has waited the whole
  // tick. Movers had their continuous-wait clocks reset in move/discharge.
  double queue_total = 0.0, speed_sum = 0.0, wait_sum = 0.0;
  long n_active = 0;
  for (auto& [vid, v] : vehicles_) {
    ++n_active;
    speed_sum += v.displacement_tick / cfg_.tick_s;
    if (v.state == VehicleState::Queued) {
      queue_total += 1.0;
      if (!v.moved_tick) {
        v.current_wait += cfg_.tick_s;
        v.accumulated_stop_time += cfg_.tick_s;
      }
    }
    wait_sum += v.current_wait;
  }

  advance_signals(events);
  ++tick_index_;

  sample_queue_.push_back(queue_total);
  sample_speed_.push_back(n_active > 0 ? speed_sum / static_cast<double>(n_active) : 0.0);
  sample_wait_.push_back(n_active > 0 ? wait_sum / static_cast<double>(n_active) : 0.0);
  return events;
}

DetectorRead SimState::detector_read(const std::string& lane_id) const {
  const Lane& lane = net_->lane(lane_id);  // throws on unknown lane
  const LaneRt& rt = lanes_.at(lane_id);
  const double cutoff = lane.length_m - cfg_.detector_range_m;
  DetectorRead r;
  for (long vid : rt.vehicles) {
    const Vehicle& v = vehicles_.at(vid);
    if (v.lane_offset < cutoff - 1e-9) continue;  // upstream of the detector
    if (v.state == VehicleState::Queued)
      r.queue_count += 1;
    else
      r.moving_count += 1;
  }
  r.occupancy = std::min(
      1.0, static_cast<double>(r.queue_count + r.moving_count) * cfg_.vehicle_len_m /
               cfg_.detector_range_m);
  return r;
}

double SimState::reward(const std::string& intersection_id) const {
  const Intersection& inter = net_->intersection(intersection_id);
  int queued = 0;
  for (const auto& l : inter.incoming) queued += detector_read(l).queue_count;
  for (const auto& l : inter.outgoing) queued += detector_read(l).queue_count;
  return -static_cast<double>(queued);
}

namespace {

struct Fnv1a {
  uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  }
  void f64(double x) { bytes(&x, sizeof x); }
  void i64(int64_t x) { bytes(&x, sizeof x); }
  void str(const std::string& s) {
    i64(static_cast<int64_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

}  // namespace

uint64_t SimState::digest() const {
  Fnv1a f;
  f.i64(tick_index_);
  f.i64(injected_);
  f.i64(dropped_);
  f.i64(next_vehicle_id_);
  for (const auto& [vid, v] : vehicles_) {
    f.i64(vid);
    f.i64(v.route_pos);
    f.f64(v.lane_offset);
    f.i64(v.state == VehicleState::Queued ? 1 : 0);
    f.f64(v.depart_time);
    f.f64(v.accumulated_stop_time);
    f.f64(v.current_wait);
  }
  for (const auto& [lid, rt] : lanes_) {
    f.str(lid);
    f.i64(rt.queued);
    f.f64(rt.discharge_credit);
    for (long vid : rt.vehicles) f.i64(vid);
  }
  for (const auto& [iid, ctl] : controllers_) {
    f.str(iid);
    f.i64(ctl.current_phase);
    f.i64(ctl.pending_phase.value_or(-1));
    f.f64(ctl.yellow_remaining);
    f.f64(ctl.green_remaining);
  }
  for (const auto& t : trips_) {
    f.i64(t.vehicle);
    f.f64(t.depart);
    f.f64(t.arrive);
    f.f64(t.free_flow_time);
  }
  return f.h;
}

MetricsReport SimState::metrics_finalize(double horizon_s) const {
  MetricsReport r;
  std::tie(r.queue_len_mean, r.queue_len_std) = mean_std(sample_queue_);
  std::tie(r.speed_mean, r.speed_std) = mean_std(sample_speed_);
  std::tie(r.int_delay_mean, r.int_delay_std) = mean_std(sample_wait_);
  const auto n_int = net_->intersection_ids().size();
  r.queue_len_per_int_mean = n_int > 0 ? r.queue_len_mean / static_cast<double>(n_int) : 0.0;
  r.completed = completed();
  r.injected = injected_;
  r.completion_rate = horizon_s > 0.0 ? static_cast<double>(r.completed) / horizon_s : 0.0;
  std::vector<double> times, delays;
  times.reserve(trips_.size());
  delays.reserve(trips_.size());
  for (const auto& t : trips_) {
    times.push_back(t.arrive - t.depart);
    delays.push_back(t.arrive - t.depart - t.free_flow_time);
  }
  std::tie(r.trip_time_mean, r.trip_time_std) = mean_std(times);
  std::tie(r.trip_delay_mean, r.trip_delay_std) = mean_std(delays);
  return r;
}

}  // namespace unicorn
