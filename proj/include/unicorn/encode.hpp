#pragma once

#include <string>
#include <vector>

#include "unicorn/common.hpp"
#include "unicorn/netmodel.hpp"
#include "unicorn/simcore.hpp"

namespace unicorn {

// Per-intersection feature bundle at its native size (|M| movements, |P|
// phases). S rows are [active, q_in, q_out, n_in, n_out, occ_in, occ_out,
// controlled_out]; G is the phase table; I the topology descriptor; U the
// neighbour-action vector.
struct RawObservation {
  std::string intersection;
  Mat S;                  // |M| x 8
  Mat G;                  // |P| x |M|
  std::vector<double> I;  // catalog_size + 7
  std::vector<double> U;  // |M|

  bool operator==(const RawObservation&) const = default;
};

// Fixed-shape, zero-padded version of RawObservation plus masks. Every entry
// past true_M / true_P is exactly zero, so downstream masked ops can rely on
// padding never leaking.
struct EncodedObservation {
  std::string intersection;
  Mat S;                              // M_max x 8
  Mat G;                              // P_max x M_max
  std::vector<double> I;              // catalog_size + 7
  std::vector<double> U;              // M_max
  std::vector<double> movement_mask;  // M_max, 1.0 for real movements
  std::vector<double> phase_mask;     // P_max, 1.0 for real phases
  int true_M = 0;
  int true_P = 0;

  bool operator==(const EncodedObservation&) const = default;
};

// Raw (unscaled) movement-level traffic state: counts and occupancies straight
// from the detectors, activation straight from the controller.
Mat traffic_state_vector(const SimState& st, const std::string& intersection_id);

// 1.0 per movement whose receiving neighbour currently serves the connecting
// lane; 0 for border movements and while the neighbour holds yellow.
std::vector<double> neighbor_action_vector(const SimState& st,
                                           const std::string& intersection_id);

// Bundles S, G, I, U for one intersection without scaling or padding.
RawObservation raw_observation(const SimState& st, const std::string& intersection_id,
                               int catalog_size);

// Normalizes magnitudes before the features enter the network: counts /10,
// lane lengths /100, speeds /10; occupancies and binary flags untouched.
RawObservation scale_observation(RawObservation obs);

EncodedObservation pad_and_mask_one(const RawObservation& obs, int M_max, int P_max);
std::vector<EncodedObservation> pad_and_mask(const std::vector<RawObservation>& obs,
                                             int M_max, int P_max);

// Inverse of pad_and_mask_one (drops the padding again).
RawObservation unpad(const EncodedObservation& enc);

// Everything an agent sees for one intersection: raw features, scaled, padded.
EncodedObservation observe(const SimState& st, const std::string& intersection_id,
                           int M_max, int P_max, int catalog_size);

// Flattened VAE input [flatten(S), G_row, I]; same dimension for every
// intersection under shared caps.
std::vector<double> build_ise_input(const Mat& S, const std::vector<double>& G_row,
                                    const std::vector<double>& I);

}  // namespace unicorn
