#pragma once

#include <map>
#include <string>
#include <vector>

#include "unicorn/checkpoint.hpp"
#include "unicorn/encode.hpp"
#include "unicorn/layers.hpp"

namespace unicorn {

// One network serves every intersection: observations arrive padded to the
// shared caps, masks route the padding out, and all agents share parameters.
struct ModelConfig {
  int d = 64;        // trunk feature width
  int d_vae = 16;    // latent width per phase
  int M_max = 0;     // movement cap
  int P_max = 0;     // phase cap
  int catalog_size = 0;

  int ise_input_width() const { return M_max * 8 + M_max + catalog_size + 7; }
  int head_width() const { return d + d_vae; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Trunk output: per-phase features fused with the recurrent state summary.
struct GfeOut {
  Tensor h_sp;        // P_max x d, padded rows exactly zero
  Tensor gru_hidden;  // 1 x d
};

// Variational stage output; padded phase rows are exactly zero everywhere.
struct IseOut {
  Tensor mu;        // P_max x d_vae
  Tensor logsigma;  // P_max x d_vae
  Tensor z;         // P_max x d_vae
  Tensor preds;     // P_max x (M_max*8), next-state prediction per phase
};

struct HeadsOut {
  Tensor h;       // P_max x (d + d_vae), policy/value trunk rows
  Tensor logits;  // 1 x P_max, pre-softmax phase scores
  Tensor policy;  // 1 x P_max, masked probabilities
  Tensor value;   // 1 x 1
};

enum class ActMode { kSample, kGreedy };

// Everything one inference step produces for one intersection.
struct AgentStep {
  Mat h_sp;
  Mat h_int;
  Mat mu;
  Mat logsigma;
  Mat preds;
  std::vector<double> policy;
  double value = 0.0;
  std::vector<double> gru_hidden;
  int action = 0;
  double log_prob = 0.0;
};

class Model {
 public:
  Model(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }

  // Deterministic name -> tensor listing; actor/critic split the list for the
  // two optimizer groups (the value path owns f_v, the neighbour-action embed,
  // and the action-decoder attention).
  ParamList named_params() const;
  ParamList actor_params() const;
  ParamList critic_params() const;

  // Strict: every parameter present with matching shape, nothing extra.
  void load_state(const std::map<std::string, Mat>& state);

  std::string manifest_json() const;
  static ModelConfig parse_manifest(const std::string& json);

  // Recurrent feature trunk: state embedding through the GRU, phase embedding,
  // and phase-onto-state attention. gru_hidden is 1 x d (zero at episode
  // start).
  GfeOut gfe_forward(const EncodedObservation& obs, const Tensor& gru_hidden) const;

  // Per-phase variational encoder/decoder. Noise is drawn only for real phase
  // rows so padding never consumes randomness.
  IseOut ise_forward(const EncodedObservation& obs, Rng& rng) const;

  // Reconstruction MSE plus closed-form KL to the standard normal prior, for
  // the executed phase only. All inputs are 1-row tensors.
  static Tensor elbo_loss(const Tensor& pred, const Tensor& true_next_flat,
                          const Tensor& mu_row, const Tensor& logsigma_row);

  // Policy over phases and the summed per-phase value with the neighbour
  // action folded in through single-key attention.
  HeadsOut heads_forward(const EncodedObservation& obs, const Tensor& h_sp,
                         const Tensor& h_int) const;

  // Full inference step without graph recording.
  AgentStep act(const EncodedObservation& obs, const std::vector<double>& gru_hidden,
                Rng& rng, ActMode mode) const;

  Tensor zero_hidden() const { return Tensor::constant(std::vector<double>(cfg_.d, 0.0), 1, cfg_.d); }

 private:
  void check_obs(const EncodedObservation& obs) const;
  Tensor phase_row_mask(const EncodedObservation& obs, int width) const;

  ModelConfig cfg_;
  Mlp2 mlp_s_;               // 8*M_max -> d
  GruCell gru_;              // d
  Mlp2 mlp_p_;               // M_max -> d, applied to phase rows
  CrossAttention gfe_attn_;  // width d
  Mlp2 vae_enc_;             // ise_in -> 2*d_vae
  Mlp2 vae_dec_;             // d_vae -> M_max*8
  Mlp2 mlp_a_;               // M_max -> d + d_vae
  CrossAttention act_attn_;  // width d + d_vae
  Linear f_pi_;              // d + d_vae -> 1
  Linear f_v_;               // 2*(d + d_vae) -> 1
};

}  // namespace unicorn
