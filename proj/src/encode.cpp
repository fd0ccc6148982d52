#include "unicorn/encode.hpp"

#include <algorithm>

namespace unicorn {

Mat traffic_state_vector(const SimState& st, const std::string& intersection_id) {
  const Network& net = st.net();
  const Intersection& inter = net.intersection(intersection_id);
  const SignalController& ctl = st.controller(intersection_id);

  std::vector<char> active(inter.movements.size(), 0);
  if (!st.in_yellow(intersection_id)) {
    const Phase& phase = inter.phases[static_cast<size_t>(ctl.current_phase)];
    for (int m : phase.active_movements) active[static_cast<size_t>(m)] = 1;
  }

  Mat S(static_cast<int>(inter.movements.size()), 8);
  for (size_t m = 0; m < inter.movements.size(); ++m) {
    const Movement& mv = inter.movements[m];
    const DetectorRead in = st.detector_read(mv.in_lane);
    const DetectorRead out = st.detector_read(mv.out_lane);
    const int r = static_cast<int>(m);
    S.at(r, 0) = active[m] ? 1.0 : 0.0;
    S.at(r, 1) = static_cast<double>(in.queue_count);
    S.at(r, 2) = static_cast<double>(out.queue_count);
    S.at(r, 3) = static_cast<double>(in.moving_count);
    S.at(r, 4) = static_cast<double>(out.moving_count);
    S.at(r, 5) = in.occupancy;
    S.at(r, 6) = out.occupancy;
    S.at(r, 7) = net.lane(mv.out_lane).signal_controlled ? 1.0 : 0.0;
  }
  return S;
}

std::vector<double> neighbor_action_vector(const SimState& st,
                                           const std::string& intersection_id) {
  const Network& net = st.net();
  const Intersection& inter = net.intersection(intersection_id);
  std::vector<double> u(inter.movements.size(), 0.0);
  for (size_t m = 0; m < inter.movements.size(); ++m) {
    const std::string& link = inter.movements[m].out_lane;
    auto down = net.lane_downstream(link);
    if (!down) continue;  // border movement
    if (st.in_yellow(*down)) continue;
    const Intersection& nbr = net.intersection(*down);
    const Phase& phase =
        nbr.phases[static_cast<size_t>(st.controller(*down).current_phase)];
    for (int nm : phase.active_movements) {
      if (nbr.movements[static_cast<size_t>(nm)].in_lane == link) {
        u[m] = 1.0;
        break;
      }
    }
  }
  return u;
}

RawObservation raw_observation(const SimState& st, const std::string& intersection_id,
                               int catalog_size) {
  RawObservation obs;
  obs.intersection = intersection_id;
  obs.S = traffic_state_vector(st, intersection_id);
  obs.G = phase_table(st.net(), intersection_id);
  obs.I = topology_vector(st.net(), intersection_id, catalog_size);
  obs.U = neighbor_action_vector(st, intersection_id);
  return obs;
}

RawObservation scale_observation(RawObservation obs) {
  // S columns: 0 activation, 1-4 counts, 5-6 occupancy, 7 controlled flag.
  for (int r = 0; r < obs.S.rows; ++r)
    for (int c = 1; c <= 4; ++c) obs.S.at(r, c) /= 10.0;
  // I layout: one-hot block, then [len_in, speed_in, n_in, n_mov, len_out,
  // speed_out, n_out].
  if (obs.I.size() < 7) throw ValidationError("topology vector too short to scale");
  const size_t base = obs.I.size() - 7;
  obs.I[base + 0] /= 100.0;
  obs.I[base + 1] /= 10.0;
  obs.I[base + 2] /= 10.0;
  obs.I[base + 3] /= 10.0;
  obs.I[base + 4] /= 100.0;
  obs.I[base + 5] /= 10.0;
  obs.I[base + 6] /= 10.0;
  return obs;
}

EncodedObservation pad_and_mask_one(const RawObservation& obs, int M_max, int P_max) {
  const int M = obs.S.rows;
  const int P = obs.G.rows;
  if (obs.S.cols != 8)
    throw ValidationError("intersection \"" + obs.intersection + "\": S must have 8 columns");
  if (obs.G.cols != M || static_cast<int>(obs.U.size()) != M)
    throw ValidationError("intersection \"" + obs.intersection +
                          "\": G/U width disagrees with movement count");
  if (M > M_max)
    throw ValidationError("intersection \"" + obs.intersection + "\" has " +
                          std::to_string(M) + " movements, over the cap M_max=" +
                          std::to_string(M_max));
  if (P > P_max)
    throw ValidationError("intersection \"" + obs.intersection + "\" has " +
                          std::to_string(P) + " phases, over the cap P_max=" +
                          std::to_string(P_max));

  EncodedObservation enc;
  enc.intersection = obs.intersection;
  enc.true_M = M;
  enc.true_P = P;
  enc.S = Mat(M_max, 8);
  for (int r = 0; r < M; ++r)
    for (int c = 0; c < 8; ++c) enc.S.at(r, c) = obs.S.at(r, c);
  enc.G = Mat(P_max, M_max);
  for (int p = 0; p < P; ++p)
    for (int m = 0; m < M; ++m) enc.G.at(p, m) = obs.G.at(p, m);
  enc.I = obs.I;
  enc.U.assign(static_cast<size_t>(M_max), 0.0);
  std::copy(obs.U.begin(), obs.U.end(), enc.U.begin());
  enc.movement_mask.assign(static_cast<size_t>(M_max), 0.0);
  std::fill(enc.movement_mask.begin(), enc.movement_mask.begin() + M, 1.0);
  enc.phase_mask.assign(static_cast<size_t>(P_max), 0.0);
  std::fill(enc.phase_mask.begin(), enc.phase_mask.begin() + P, 1.0);
  return enc;
}

std::vector<EncodedObservation> pad_and_mask(const std::vector<RawObservation>& obs,
                                             int M_max, int P_max) {
  std::vector<EncodedObservation> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(pad_and_mask_one(o, M_max, P_max));
  return out;
}

RawObservation unpad(const EncodedObservation& enc) {
  RawObservation obs;
  obs.intersection = enc.intersection;
  obs.S = Mat(enc.true_M, 8);
  for (int r = 0; r < enc.true_M; ++r)
    for (int c = 0; c < 8; ++c) obs.S.at(r, c) = enc.S.at(r, c);
  obs.G = Mat(enc.true_P, enc.true_M);
  for (int p = 0; p < enc.true_P; ++p)
    for (int m = 0; m < enc.true_M; ++m) obs.G.at(p, m) = enc.G.at(p, m);
  obs.I = enc.I;
  obs.U.assign(enc.U.begin(), enc.U.begin() + enc.true_M);
  return obs;
}

EncodedObservation observe(const SimState& st, const std::string& intersection_id,
                           int M_max, int P_max, int catalog_size) {
  return pad_and_mask_one(
      scale_observation(raw_observation(st, intersection_id, catalog_size)), M_max, P_max);
}

std::vector<double> build_ise_input(const Mat& S, const std::vector<double>& G_row,
                                    const std::vector<double>& I) {
  if (S.cols != 8) throw ValidationError("ise input: S must have 8 columns");
  if (static_cast<int>(G_row.size()) != S.rows)
    throw ValidationError("ise input: G row length must equal the movement cap");
  std::vector<double> x;
  x.reserve(S.v.size() + G_row.size() + I.size());
  x.insert(x.end(), S.v.begin(), S.v.end());
  x.insert(x.end(), G_row.begin(), G_row.end());
  x.insert(x.end(), I.begin(), I.end());
  return x;
}

}  // namespace unicorn
