#include "unicorn/learn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <map>
#include <ostream>
#include <sstream>

namespace unicorn {

void TrainConfig::validate() const {
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("train: gamma must lie in (0, 1]");
  if (lambda_gae < 0.0 || lambda_gae > 1.0)
    throw ConfigError("train: lambda_gae must lie in [0, 1]");
  if (clip_eps <= 0.0) throw ConfigError("train: clip_eps must be positive");
  if (epochs <= 0 || iterations <= 0)
    throw ConfigError("train: epochs and iterations must be positive");
  if (lr_actor <= 0.0 || lr_critic <= 0.0)
    throw ConfigError("train: learning rates must be positive");
  if (horizon_s <= 0.0) throw ConfigError("train: horizon must be positive");
  if (tau_cont <= 0.0) throw ConfigError("train: contrastive temperature must be positive");
  if (contrastive_batch < 2) throw ConfigError("train: contrastive batch must be at least 2");
  if (threads <= 0) throw ConfigError("train: threads must be positive");
}

std::string training_log_header() {
  return "iter,scenario,mean_return,L_p,L_v,L_e,L_vae,L_cont,wall_s";
}

std::string training_log_row(const IterationLog& r) {
  std::ostringstream os;
  os << r.iter << ',' << r.scenario << ',' << csv_double(r.mean_return) << ','
     << csv_double(r.l_p) << ',' << csv_double(r.l_v) << ',' << csv_double(r.l_e) << ','
     << csv_double(r.l_vae) << ',' << csv_double(r.l_cont) << ',' << csv_double(r.wall_s);
  return os.str();
}

TrajectoryBatch collect_rollout(const ScenarioEnv& env, const Model& model,
                                double horizon_s, unsigned long long seed, ActMode mode) {
  const ModelConfig& mc = model.config();
  SimState st(env.net, env.flows, env.sim, seed);
  Rng act_rng(seed * 0x9e3779b97f4a7c15ULL + 0x1234567ULL);

  const double interval = env.sim.decision_interval_s;
  const long ticks_per_step = std::lround(interval / env.sim.tick_s);
  const long T = std::lround(horizon_s / interval);
  if (T <= 0) throw ConfigError("rollout: horizon shorter than one decision interval");

  std::vector<std::string> ids = env.net.intersection_ids();
  TrajectoryBatch batch;
  batch.scenario = env.name;
  batch.agents.resize(ids.size());
  std::map<std::string, std::vector<double>> hidden;
  for (size_t a = 0; a < ids.size(); ++a) {
    batch.agents[a].intersection = ids[a];
    batch.agents[a].steps.reserve(static_cast<size_t>(T));
  }

  for (long t = 0; t < T; ++t) {
    std::map<std::string, int> actions;
    for (size_t a = 0; a < ids.size(); ++a) {
      const std::string& id = ids[a];
      EncodedObservation obs = observe(st, id, mc.M_max, mc.P_max, mc.catalog_size);
      AgentStep step = model.act(obs, hidden[id], act_rng, mode);
      Transition tr;
      tr.obs = std::move(obs);
      tr.action = step.action;
      tr.log_prob_old = step.log_prob;
      tr.value_old = step.value;
      tr.gru_hidden_in = hidden[id];
      tr.mu_selected.assign(step.mu.v.begin() + static_cast<size_t>(step.action) * mc.d_vae,
                            step.mu.v.begin() + static_cast<size_t>(step.action + 1) * mc.d_vae);
      tr.done = t + 1 == T;
      batch.agents[a].steps.push_back(std::move(tr));
      hidden[id] = step.gru_hidden;
      actions[id] = step.action;
    }
    st.apply_actions(actions);
    for (long k = 0; k < ticks_per_step; ++k) st.tick();
    for (size_t a = 0; a < ids.size(); ++a)
      batch.agents[a].steps.back().reward = st.reward(ids[a]);
  }

  // Final boundary: fill reconstruction targets and bootstrap values.
  double ret_sum = 0.0;
  for (size_t a = 0; a < ids.size(); ++a) {
    const std::string& id = ids[a];
    EncodedObservation final_obs = observe(st, id, mc.M_max, mc.P_max, mc.catalog_size);
    AgentStep last = model.act(final_obs, hidden[id], act_rng, ActMode::kGreedy);
    batch.agents[a].bootstrap_value = last.value;
    auto& steps = batch.agents[a].steps;
    for (size_t t = 0; t + 1 < steps.size(); ++t) steps[t].next_S = steps[t + 1].obs.S;
    steps.back().next_S = final_obs.S;
    double ret = 0.0;
    for (const Transition& tr : steps) ret += tr.reward;
    ret_sum += ret;
  }
  batch.mean_return = ids.empty() ? 0.0 : ret_sum / static_cast<double>(ids.size());
  return batch;
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double gamma, double lambda) {
  if (values.size() != rewards.size() + 1)
    throw ValidationError("gae: values must hold exactly one bootstrap entry past rewards");
  const size_t T = rewards.size();
  GaeResult out;
  out.advantages.assign(T, 0.0);
  out.returns.assign(T, 0.0);
  double acc = 0.0;
  for (size_t t = T; t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lambda * acc;
    out.advantages[t] = acc;
    out.returns[t] = acc + values[t];
  }
  return out;
}

void normalize_advantages(std::vector<double>& advantages) {
  if (advantages.empty()) return;
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (double& a : advantages) a = (a - mean) * inv;
}

Tensor ppo_clip_objective(const std::vector<Tensor>& log_prob_new,
                          const std::vector<double>& log_prob_old,
                          const std::vector<double>& advantages, double clip_eps) {
  if (log_prob_new.empty() || log_prob_new.size() != log_prob_old.size() ||
      log_prob_new.size() != advantages.size())
    throw ValidationError("ppo: batch vectors must be nonempty and equally sized");
  std::vector<Tensor> terms;
  terms.reserve(log_prob_new.size());
  for (size_t k = 0; k < log_prob_new.size(); ++k) {
    Tensor ratio = exp_t(sub(log_prob_new[k], Tensor::scalar(log_prob_old[k])));
    Tensor surr = mul(ratio, advantages[k]);
    Tensor clipped = mul(clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps), advantages[k]);
    terms.push_back(min_elem(surr, clipped));
  }
  return neg(mean(concat_rows(terms)));
}

Tensor td_value_loss(const std::vector<Tensor>& value_new,
                     const std::vector<double>& td_targets) {
  if (value_new.empty() || value_new.size() != td_targets.size())
    throw ValidationError("value loss: batch vectors must be nonempty and equally sized");
  std::vector<Tensor> sq;
  sq.reserve(value_new.size());
  for (size_t k = 0; k < value_new.size(); ++k) {
    Tensor d = sub(value_new[k], Tensor::scalar(td_targets[k]));
    sq.push_back(mul(d, d));
  }
  return mean(concat_rows(sq));
}

Tensor ntxent_loss(const std::vector<ContrastiveEntry>& buffer, Rng& rng, int batch_size,
                   double tau) {
  if (buffer.size() < 2) throw ValidationError("contrastive: need at least two entries");
  // Sample without replacement up to batch_size entries.
  std::vector<size_t> idx(buffer.size());
  for (size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  const size_t n = std::min<size_t>(static_cast<size_t>(batch_size), idx.size());
  for (size_t k = 0; k < n; ++k) {
    const size_t j = k + static_cast<size_t>(rng.uniform_int(static_cast<int>(idx.size() - k)));
    std::swap(idx[k], idx[j]);
  }
  idx.resize(n);

  const int d = buffer[idx[0]].mu.cols();
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    const Tensor& mu = buffer[idx[k]].mu;
    if (mu.rows() != 1 || mu.cols() != d)
      throw ValidationError("contrastive: latent vectors must share one row shape");
    rows.push_back(mu);
  }
  Tensor X = concat_rows(rows);  // n x d

  // Row-normalize, then one n x n product yields every cosine similarity.
  Tensor ones_col = Tensor::constant(std::vector<double>(static_cast<size_t>(d), 1.0),
                                     d, 1);
  Tensor sq_norm = matmul(mul(X, X), ones_col);                       // n x 1
  Tensor norm = clamp(sqrt_t(sq_norm), 1e-8, 1e30);                   // n x 1
  Tensor ones_row = Tensor::constant(std::vector<double>(static_cast<size_t>(d), 1.0), 1, d);
  Tensor Xn = div(X, matmul(norm, ones_row));                         // n x d
  Tensor sims = matmul_nt(Xn, Xn);                                    // n x n
  Tensor expo = exp_t(mul(sims, 1.0 / tau));
  Tensor ones_n = Tensor::constant(std::vector<double>(n, 1.0), static_cast<int>(n), 1);
  Tensor row_sums = matmul(expo, ones_n);  // n x 1, includes self term

  // Anchors: sampled entries with a same-agent different-step partner.
  std::vector<Tensor> terms;
  for (size_t a = 0; a < n; ++a) {
    std::vector<size_t> positives;
    for (size_t b = 0; b < n; ++b)
      if (b != a && buffer[idx[b]].agent == buffer[idx[a]].agent &&
          buffer[idx[b]].step != buffer[idx[a]].step)
        positives.push_back(b);
    if (positives.empty()) continue;
    const size_t pos =
        positives[static_cast<size_t>(rng.uniform_int(static_cast<int>(positives.size())))];
    Tensor denom = sub(gather(row_sums, static_cast<int>(a), 0),
                       gather(expo, static_cast<int>(a), static_cast<int>(a)));
    Tensor term = sub(log_t(denom),
                      mul(gather(sims, static_cast<int>(a), static_cast<int>(pos)), 1.0 / tau));
    terms.push_back(term);
  }
  if (terms.empty())
    throw ValidationError("contrastive: no positive pairs available in the sampled batch");
  return mean(concat_rows(terms));
}

Adam::Adam(ParamList params, double lr) : lr_(lr) {
  for (auto& [name, t] : params) {
    Slot s;
    s.t = t;
    s.m.assign(t.numel(), 0.0);
    s.v.assign(t.numel(), 0.0);
    slots_.push_back(std::move(s));
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.t.zero_grad();
}

void Adam::step() {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++step_count_;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (auto& s : slots_) {
    const auto& g = s.t.grad();
    if (g.size() != s.m.size()) continue;  // never touched by backward
    auto& data = s.t.mutable_data();
    for (size_t k = 0; k < data.size(); ++k) {
      s.m[k] = b1 * s.m[k] + (1.0 - b1) * g[k];
      s.v[k] = b2 * s.v[k] + (1.0 - b2) * g[k] * g[k];
      data[k] -= lr_ * (s.m[k] / bc1) / (std::sqrt(s.v[k] / bc2) + eps);
    }
  }
}

namespace {

struct FlatSample {
  const Transition* tr;
  size_t scenario;  // index into the batch list
  int agent;        // global agent tag, unique per (scenario, intersection)
  int step;
  double advantage;
  double td_target;
};

struct EpochLosses {
  double l_p = 0.0, l_v = 0.0, l_e = 0.0, l_vae = 0.0, l_cont = 0.0;
};

}  // namespace

std::vector<IterationLog> train(Model& model, const std::vector<ScenarioEnv>& scenarios,
                                const TrainConfig& cfg, std::ostream* log_csv,
                                const std::function<void(int, const Model&)>& on_iteration) {
  cfg.validate();
  if (scenarios.empty()) throw ConfigError("train: no scenarios given");

  Adam actor_opt(model.actor_params(), cfg.lr_actor);
  Adam critic_opt(model.critic_params(), cfg.lr_critic);
  std::vector<IterationLog> logs;
  if (log_csv) *log_csv << training_log_header() << '\n';

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto wall_start = std::chrono::steady_clock::now();

    // Round-robin: every scenario contributes one fresh episode per iteration.
    std::vector<TrajectoryBatch> batches(scenarios.size());
    auto collect_one = [&](size_t s) {
      const unsigned long long seed =
          cfg.seed * 1000003ULL + static_cast<unsigned long long>(iter) * 131ULL + s * 17ULL + 1;
      return collect_rollout(scenarios[s], model, cfg.horizon_s, seed, ActMode::kSample);
    };
    if (cfg.threads > 1 && scenarios.size() > 1) {
      std::vector<std::future<TrajectoryBatch>> futs;
      for (size_t s = 0; s < scenarios.size(); ++s)
        futs.push_back(std::async(std::launch::async, collect_one, s));
      for (size_t s = 0; s < scenarios.size(); ++s) batches[s] = futs[s].get();
    } else {
      for (size_t s = 0; s < scenarios.size(); ++s) batches[s] = collect_one(s);
    }

    // GAE per agent, then one flat update batch mixing every scenario.
    std::vector<FlatSample> samples;
    int agent_tag = 0;
    for (size_t s = 0; s < batches.size(); ++s) {
      for (const AgentTrajectory& traj : batches[s].agents) {
        std::vector<double> rewards, values;
        for (const Transition& tr : traj.steps) {
          rewards.push_back(tr.reward);
          values.push_back(tr.value_old);
        }
        values.push_back(traj.bootstrap_value);
        GaeResult gae = compute_gae(rewards, values, cfg.gamma, cfg.lambda_gae);
        for (size_t t = 0; t < traj.steps.size(); ++t) {
          FlatSample fs;
          fs.tr = &traj.steps[t];
          fs.scenario = s;
          fs.agent = agent_tag;
          fs.step = static_cast<int>(t);
          fs.advantage = gae.advantages[t];
          fs.td_target = rewards[t] + cfg.gamma * values[t + 1];
          samples.push_back(fs);
        }
        ++agent_tag;
      }
    }
    if (samples.empty()) throw ConfigError("train: rollout produced no transitions");

    std::vector<double> advs(samples.size());
    for (size_t k = 0; k < samples.size(); ++k) advs[k] = samples[k].advantage;
    normalize_advantages(advs);
    for (size_t k = 0; k < samples.size(); ++k) samples[k].advantage = advs[k];

    // PPO epochs over the full batch; fresh reparameterization noise each
    // epoch from a seeded stream.
    Rng epoch_rng(cfg.seed * 7919ULL + static_cast<unsigned long long>(iter) + 13ULL);
    EpochLosses last;
    std::vector<EpochLosses> last_per_scenario(scenarios.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<Tensor> log_new, value_new, entropies, elbos;
      std::vector<double> log_old, advantages, td_targets;
      std::vector<std::vector<ContrastiveEntry>> buffers(scenarios.size());
      std::vector<std::vector<size_t>> scenario_members(scenarios.size());
      log_new.reserve(samples.size());

      for (size_t k = 0; k < samples.size(); ++k) {
        const FlatSample& fs = samples[k];
        const Transition& tr = *fs.tr;
        Tensor hidden = tr.gru_hidden_in.empty()
                            ? model.zero_hidden()
                            : Tensor::constant(tr.gru_hidden_in, 1, model.config().d);
        GfeOut gfe = model.gfe_forward(tr.obs, hidden);
        IseOut ise = model.ise_forward(tr.obs, epoch_rng);
        HeadsOut heads = model.heads_forward(tr.obs, gfe.h_sp, ise.mu);

        Tensor mask_row = Tensor::constant(tr.obs.phase_mask, 1, model.config().P_max);
        Tensor logp_row = masked_log_softmax(heads.logits, mask_row);
        log_new.push_back(gather(logp_row, 0, tr.action));
        value_new.push_back(heads.value);
        entropies.push_back(masked_entropy(heads.logits, mask_row));
        log_old.push_back(tr.log_prob_old);
        advantages.push_back(fs.advantage);
        td_targets.push_back(fs.td_target);

        const int M8 = model.config().M_max * 8;
        Tensor target = Tensor::constant(tr.next_S.v, 1, M8);
        elbos.push_back(Model::elbo_loss(slice_rows(ise.preds, tr.action, tr.action + 1),
                                         target, slice_rows(ise.mu, tr.action, tr.action + 1),
                                         slice_rows(ise.logsigma, tr.action, tr.action + 1)));
        buffers[fs.scenario].push_back(
            {fs.agent, fs.step, slice_rows(ise.mu, tr.action, tr.action + 1)});
        scenario_members[fs.scenario].push_back(k);
      }

      Tensor l_p = ppo_clip_objective(log_new, log_old, advantages, cfg.clip_eps);
      Tensor l_v = td_value_loss(value_new, td_targets);
      Tensor l_e = mean(concat_rows(entropies));
      Tensor l_vae = mean(concat_rows(elbos));
      std::vector<Tensor> cont_terms;
      for (size_t s = 0; s < scenarios.size(); ++s)
        if (buffers[s].size() >= 2)
          cont_terms.push_back(
              ntxent_loss(buffers[s], epoch_rng, cfg.contrastive_batch, cfg.tau_cont));
      Tensor l_cont = cont_terms.empty() ? Tensor::scalar(0.0) : mean(concat_rows(cont_terms));

      Tensor total = add(sub(add(l_p, mul(l_v, cfg.c1)), mul(l_e, cfg.c2)),
                         add(mul(l_vae, cfg.c3), mul(l_cont, cfg.c4)));
      if (!std::isfinite(total.item()))
        throw Error("train: non-finite loss at iteration " + std::to_string(iter) +
                    " epoch " + std::to_string(epoch) + " (L_p=" + csv_double(l_p.item()) +
                    ", L_v=" + csv_double(l_v.item()) + ", L_e=" + csv_double(l_e.item()) +
                    ", L_vae=" + csv_double(l_vae.item()) +
                    ", L_cont=" + csv_double(l_cont.item()) + ")");

      actor_opt.zero_grad();
      critic_opt.zero_grad();
      total.backward();
      actor_opt.step();
      critic_opt.step();

      last = {l_p.item(), l_v.item(), l_e.item(), l_vae.item(), l_cont.item()};
      if (epoch + 1 == cfg.epochs) {
        // Per-scenario component losses from the final epoch's activations.
        for (size_t s = 0; s < scenarios.size(); ++s) {
          const auto& members = scenario_members[s];
          if (members.empty()) continue;
          std::vector<Tensor> ln, vn, en, eb;
          std::vector<double> lo, ad, td;
          for (size_t k : members) {
            ln.push_back(log_new[k]);
            vn.push_back(value_new[k]);
            en.push_back(entropies[k]);
            eb.push_back(elbos[k]);
            lo.push_back(log_old[k]);
            ad.push_back(advantages[k]);
            td.push_back(td_targets[k]);
          }
          NoGradGuard ng;
          EpochLosses& out = last_per_scenario[s];
          out.l_p = ppo_clip_objective(ln, lo, ad, cfg.clip_eps).item();
          out.l_v = td_value_loss(vn, td).item();
          out.l_e = mean(concat_rows(en)).item();
          out.l_vae = mean(concat_rows(eb)).item();
          out.l_cont = buffers[s].size() >= 2 && !cont_terms.empty() ? last.l_cont : 0.0;
        }
      }
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    for (size_t s = 0; s < scenarios.size(); ++s) {
      IterationLog row;
      row.iter = iter;
      row.scenario = scenarios[s].name;
      row.mean_return = batches[s].mean_return;
      row.l_p = last_per_scenario[s].l_p;
      row.l_v = last_per_scenario[s].l_v;
      row.l_e = last_per_scenario[s].l_e;
      row.l_vae = last_per_scenario[s].l_vae;
      row.l_cont = last_per_scenario[s].l_cont;
      row.wall_s = wall;
      if (log_csv) *log_csv << training_log_row(row) << '\n';
      logs.push_back(std::move(row));
    }
    if (log_csv) log_csv->flush();
    if (on_iteration) on_iteration(iter, model);
  }
  return logs;
}

}  // namespace unicorn
