#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unicorn/model.hpp"

namespace unicorn {

// One (observation, action, reward) sample for one intersection at one
// decision step, plus everything the update pass needs to rebuild the forward
// graph: the pre-step GRU hidden (treated as a constant, truncating
// backpropagation at step boundaries) and the next padded state for the
// reconstruction target.
struct Transition {
  EncodedObservation obs;
  int action = 0;
  double log_prob_old = 0.0;
  double reward = 0.0;
  double value_old = 0.0;
  std::vector<double> gru_hidden_in;  // empty = episode start (zero hidden)
  std::vector<double> mu_selected;    // executed phase's latent mean
  Mat next_S;                         // M_max x 8 at the next boundary
  bool done = false;
};

struct AgentTrajectory {
  std::string intersection;
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;  // V of the final observation
};

struct TrajectoryBatch {
  std::string scenario;
  std::vector<AgentTrajectory> agents;
  double mean_return = 0.0;  // mean over agents of summed rewards
};

struct ScenarioEnv {
  std::string name;
  Network net;
  FlowSpec flows;
  SimConfig sim;
};

struct TrainConfig {
  double gamma = 0.95;
  double lambda_gae = 0.98;
  double lr_actor = 1e-4;
  double lr_critic = 2e-4;
  double clip_eps = 0.2;
  int epochs = 6;
  double c1 = 0.5;     // value loss
  double c2 = 2e-3;    // entropy bonus
  double c3 = 2e-4;    // reconstruction/KL loss
  double c4 = 1e-5;    // contrastive loss
  double tau_cont = 0.2;
  int contrastive_batch = 256;
  int iterations = 100;
  double horizon_s = 3600.0;
  unsigned long long seed = 1;
  int threads = 1;  // parallel rollout collection across scenarios

  void validate() const;
};

struct IterationLog {
  int iter = 0;
  std::string scenario;
  double mean_return = 0.0;
  double l_p = 0.0;
  double l_v = 0.0;
  double l_e = 0.0;
  double l_vae = 0.0;
  double l_cont = 0.0;
  double wall_s = 0.0;
};

std::string training_log_header();
std::string training_log_row(const IterationLog& row);

// Plays one full episode with the current policy and records every agent's
// transitions. Deterministic given (env, model parameters, seed, mode).
TrajectoryBatch collect_rollout(const ScenarioEnv& env, const Model& model,
                                double horizon_s, unsigned long long seed, ActMode mode);

struct GaeResult {
  std::vector<double> advantages;  // raw, not normalized
  std::vector<double> returns;     // advantages + values[0..T)
};

// values must have one bootstrap entry past the rewards.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double gamma, double lambda);

// In-place zero-mean unit-variance scaling over the whole update batch.
void normalize_advantages(std::vector<double>& advantages);

// Clipped-ratio policy objective: -mean over samples of
// min(k*A, clip(k, 1-eps, 1+eps)*A) with k = exp(log_new - log_old).
Tensor ppo_clip_objective(const std::vector<Tensor>& log_prob_new,
                          const std::vector<double>& log_prob_old,
                          const std::vector<double>& advantages, double clip_eps);

// Mean squared temporal-difference error against stored targets.
Tensor td_value_loss(const std::vector<Tensor>& value_new,
                     const std::vector<double>& td_targets);

struct ContrastiveEntry {
  int agent = 0;
  int step = 0;
  Tensor mu;  // 1 x d_vae
};

// Normalized temperature-scaled cross entropy over cosine similarities.
// Anchors are sampled entries with at least one same-agent different-step
// partner inside the sample; each anchor's denominator spans the sampled
// batch minus itself.
Tensor ntxent_loss(const std::vector<ContrastiveEntry>& buffer, Rng& rng, int batch_size,
                   double tau);

// Moment-based adaptive optimizer over one parameter group.
class Adam {
 public:
  Adam() = default;
  Adam(ParamList params, double lr);
  void zero_grad();
  void step();
  double lr() const { return lr_; }

 private:
  struct Slot {
    Tensor t;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double lr_ = 0.0;
  long step_count_ = 0;
};

// Runs the full training loop over every scenario each iteration, mutating
// the model in place. Writes one CSV row per (iteration, scenario) to log_csv
// when given; calls on_iteration after each optimizer update when given.
std::vector<IterationLog> train(Model& model, const std::vector<ScenarioEnv>& scenarios,
                                const TrainConfig& cfg, std::ostream* log_csv = nullptr,
                                const std::function<void(int, const Model&)>& on_iteration = {});

}  // namespace unicorn
