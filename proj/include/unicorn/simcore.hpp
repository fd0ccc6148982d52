#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unicorn/common.hpp"
#include "unicorn/netmodel.hpp"
#include "unicorn/rng.hpp"

namespace unicorn {

struct SimConfig {
  double tick_s = 1.0;
  double decision_interval_s = 15.0;
  double yellow_s = 5.0;
  double detector_range_m = 50.0;
  double vehicle_len_m = 7.5;          // effective length: car + standstill gap
  double saturation_headway_s = 2.0;   // per-lane discharge headway at green
};

struct FlowRate {
  std::string origin;
  std::string destination;
  double veh_per_min = 0.0;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct FlowDeparture {
  std::string origin;
  std::string destination;
  double depart_s = 0.0;
};

struct FlowSpec {
  std::vector<FlowRate> rates;
  std::vector<FlowDeparture> departures;
};

FlowSpec parse_flows(const std::string& text);
std::string serialize_flows(const FlowSpec& flows);

enum class VehicleState { Moving, Queued };

struct Vehicle {
  long id = 0;
  std::vector<std::string> route;  // lane ids, origin first
  int route_pos = 0;
  double lane_offset = 0.0;  // meters from lane entry
  VehicleState state = VehicleState::Moving;
  double depart_time = 0.0;
  double accumulated_stop_time = 0.0;
  double current_wait = 0.0;  // continuous wait, reset on motion
  double free_flow_time = 0.0;

  // per-tick scratch, cleared at the start of every tick
  bool moved_tick = false;
  double displacement_tick = 0.0;
};

struct SignalController {
  int current_phase = 0;
  std::optional<int> pending_phase;
  double yellow_remaining = 0.0;
  double green_remaining = 0.0;
};

struct TripRecord {
  long vehicle = 0;
  double depart = 0.0;
  double arrive = 0.0;
  double free_flow_time = 0.0;
};

enum class EventKind { Inject, Discharge, Complete, YellowStart, GreenStart };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Inject;
  std::string intersection;  // YellowStart/GreenStart
  std::string lane;          // Inject: origin; Discharge: lane left; Complete: final lane
  long vehicle = -1;
  int phase = -1;  // GreenStart: phase now green; YellowStart: pending phase
};

struct DetectorRead {
  int queue_count = 0;
  int moving_count = 0;
  double occupancy = 0.0;
};

struct MetricsReport {
  double queue_len_mean = 0.0;  // network-total stopped vehicles, per-step mean
  double queue_len_std = 0.0;
  double queue_len_per_int_mean = 0.0;  // same series divided by intersection count
  double speed_mean = 0.0;
  double speed_std = 0.0;
  double int_delay_mean = 0.0;  // mean of per-vehicle continuous waits, sampled per step
  double int_delay_std = 0.0;
  double completion_rate = 0.0;  // completed trips per second of horizon
  double trip_time_mean = 0.0;
  double trip_time_std = 0.0;
  double trip_delay_mean = 0.0;
  double trip_delay_std = 0.0;
  long completed = 0;
  long injected = 0;
};

extern const char* kMetricsCsvHeader;
std::string metrics_csv_row(const std::string& scenario, const std::string& seed,
                            const MetricsReport& r);

// Discrete-time point-queue world. Vehicles travel at free-flow speed until
// they hit the back of the queue at the stop line; queues discharge through
// green movements at the saturation headway. All state updates are
// deterministic given (network, flows, config, seed, action sequence).
class SimState {
 public:
  SimState(const Network& net, FlowSpec flows, SimConfig cfg, uint64_t seed);

  // One tick: inject, move, discharge, update waits and signal timers.
  std::vector<Event> tick();

  // Sets every intersection's next phase. Only legal on decision boundaries.
  void apply_actions(const std::map<std::string, int>& actions);

  bool on_decision_boundary() const;
  double clock() const { return static_cast<double>(tick_index_) * cfg_.tick_s; }
  const SimConfig& config() const { return cfg_; }
  const Network& net() const { return *net_; }

  DetectorRead detector_read(const std::string& lane_id) const;
  double reward(const std::string& intersection_id) const;

  const SignalController& controller(const std::string& intersection_id) const;
  bool in_yellow(const std::string& intersection_id) const;

  long injected() const { return injected_; }
  long completed() const { return static_cast<long>(trips_.size()); }
  long active_count() const { return static_cast<long>(vehicles_.size()); }
  long dropped() const { return dropped_; }
  const std::vector<TripRecord>& trip_ledger() const { return trips_; }

  // Deterministic ids of vehicles on a lane, nearest stop line first.
  const std::deque<long>& lane_vehicles(const std::string& lane_id) const;
  const Vehicle& vehicle(long id) const;

  // FNV-1a hash over the full dynamic state; equal hashes on identical runs.
  uint64_t digest() const;

  MetricsReport metrics_finalize(double horizon_s) const;

 private:
  struct LaneRt {
    std::deque<long> vehicles;  // sorted by lane_offset descending
    int queued = 0;
    double discharge_credit = 0.0;
  };

  void inject(std::vector<Event>& events);
  void spawn(const std::string& origin, const std::string& destination, std::vector<Event>& events);
  void move_vehicles(std::vector<Event>& events);
  void discharge(std::vector<Event>& events);
  void advance_signals(std::vector<Event>& events);
  bool lane_has_space(const std::string& lane_id) const;
  const std::vector<std::string>& route_for(const std::string& origin,
                                            const std::string& destination);
  double route_free_flow_time(const std::vector<std::string>& route) const;
  bool movement_green(const std::string& in_lane, const std::string& out_lane) const;

  const Network* net_;
  FlowSpec flows_;
  SimConfig cfg_;
  Rng rng_;
  int64_t tick_index_ = 0;
  int64_t ticks_per_decision_ = 0;

  long next_vehicle_id_ = 0;
  std::map<long, Vehicle> vehicles_;
  std::map<std::string, LaneRt> lanes_;
  std::map<std::string, SignalController> controllers_;
  std::vector<TripRecord> trips_;
  long injected_ = 0;
  long dropped_ = 0;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> route_cache_;
  std::vector<size_t> sorted_departures_;  // indices into flows_.departures, by depart_s
  size_t departure_cursor_ = 0;

  // per-tick metric samples
  std::vector<double> sample_queue_;
  std::vector<double> sample_speed_;
  std::vector<double> sample_wait_;
};

SimState init_sim(const Network& net, FlowSpec flows, SimConfig cfg, uint64_t seed);

}  // namespace unicorn
