#include "unicorn/model.hpp"

#include <cmath>

#include <json.hpp>

namespace unicorn {

void ModelConfig::validate() const {
  if (d <= 0 || d % 4 != 0) throw ConfigError("model: d must be a positive multiple of 4");
  if (d_vae <= 0) throw ConfigError("model: d_vae must be positive");
  if ((d + d_vae) % 4 != 0)
    throw ConfigError("model: d + d_vae must be a multiple of 4 for the action decoder");
  if (M_max <= 0 || P_max <= 0) throw ConfigError("model: movement and phase caps must be positive");
  if (catalog_size <= 0) throw ConfigError("model: catalog_size must be positive");
}

Model::Model(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d, hw = cfg_.head_width();
  mlp_s_ = Mlp2(8 * cfg_.M_max, d, d, rng);
  gru_ = GruCell(d, rng);
  mlp_p_ = Mlp2(cfg_.M_max, d, d, rng);
  gfe_attn_ = CrossAttention(d, 4, rng);
  vae_enc_ = Mlp2(cfg_.ise_input_width(), d, 2 * cfg_.d_vae, rng);
  vae_dec_ = Mlp2(cfg_.d_vae, d, cfg_.M_max * 8, rng);
  mlp_a_ = Mlp2(cfg_.M_max, hw, hw, rng);
  act_attn_ = CrossAttention(hw, 4, rng);
  f_pi_ = Linear(hw, 1, rng);
  f_v_ = Linear(2 * hw, 1, rng);
}

ParamList Model::actor_params() const {
  ParamList out;
  mlp_s_.collect("mlp_s", out);
  gru_.collect("gru", out);
  mlp_p_.collect("mlp_p", out);
  gfe_attn_.collect("gfe_attn", out);
  vae_enc_.collect("vae_enc", out);
  vae_dec_.collect("vae_dec", out);
  f_pi_.collect("f_pi", out);
  return out;
}

ParamList Model::critic_params() const {
  ParamList out;
  mlp_a_.collect("mlp_a", out);
  act_attn_.collect("act_attn", out);
  f_v_.collect("f_v", out);
  return out;
}

ParamList Model::named_params() const {
  ParamList out = actor_params();
  ParamList critic = critic_params();
  out.insert(out.end(), critic.begin(), critic.end());
  return out;
}

void Model::load_state(const std::map<std::string, Mat>& state) {
  ParamList params = named_params();
  if (state.size() != params.size())
    throw ValidationError("model: checkpoint has " + std::to_string(state.size()) +
                          " tensors, expected " + std::to_string(params.size()));
  for (auto& [name, t] : params) {
    auto it = state.find(name);
    if (it == state.end()) throw ValidationError("model: checkpoint missing tensor '" + name + "'");
    const Mat& m = it->second;
    if (m.rows != t.rows() || m.cols != t.cols())
      throw ValidationError("model: tensor '" + name + "' has shape " + std::to_string(m.rows) +
                            "x" + std::to_string(m.cols) + ", expected " +
                            std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    t.mutable_data() = m.v;
  }
}

std::string Model::manifest_json() const {
  nlohmann::json j;
  j["d"] = cfg_.d;
  j["d_vae"] = cfg_.d_vae;
  j["M_max"] = cfg_.M_max;
  j["P_max"] = cfg_.P_max;
  j["catalog_size"] = cfg_.catalog_size;
  return j.dump(2) + "\n";
}

ModelConfig Model::parse_manifest(const std::string& json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  ModelConfig cfg;
  for (const char* key : {"d", "d_vae", "M_max", "P_max", "catalog_size"})
    if (!j.contains(key) || !j.at(key).is_number_integer())
      throw ValidationError(std::string("manifest: missing integer field '") + key + "'");
  cfg.d = j.at("d").get<int>();
  cfg.d_vae = j.at("d_vae").get<int>();
  cfg.M_max = j.at("M_max").get<int>();
  cfg.P_max = j.at("P_max").get<int>();
  cfg.catalog_size = j.at("catalog_size").get<int>();
  cfg.validate();
  return cfg;
}

void Model::check_obs(const EncodedObservation& obs) const {
  if (obs.S.rows != cfg_.M_max || obs.S.cols != 8 || obs.G.rows != cfg_.P_max ||
      obs.G.cols != cfg_.M_max || obs.U.size() != static_cast<size_t>(cfg_.M_max) ||
      obs.movement_mask.size() != static_cast<size_t>(cfg_.M_max) ||
      obs.phase_mask.size() != static_cast<size_t>(cfg_.P_max) ||
      obs.I.size() != static_cast<size_t>(cfg_.catalog_size + 7))
    throw ValidationError("model: observation for '" + obs.intersection +
                          "' does not match the configured caps");
}

namespace {

// The network never trusts padding: every movement-indexed input is re-masked
// here, so garbage past true_M cannot leak into any activation.
std::vector<double> masked_flat_s(const EncodedObservation& obs) {
  std::vector<double> flat(obs.S.v);
  for (int m = 0; m < obs.S.rows; ++m)
    for (int f = 0; f < 8; ++f)
      flat[static_cast<size_t>(m) * 8 + f] *= obs.movement_mask[static_cast<size_t>(m)];
  return flat;
}

Mat masked_s(const EncodedObservation& obs) {
  Mat s = obs.S;
  for (int m = 0; m < s.rows; ++m)
    for (int f = 0; f < 8; ++f) s.at(m, f) *= obs.movement_mask[static_cast<size_t>(m)];
  return s;
}

std::vector<double> masked_row(const std::vector<double>& v,
                               const std::vector<double>& mask) {
  std::vector<double> out(v);
  for (size_t k = 0; k < out.size(); ++k) out[k] *= mask[k];
  return out;
}

}  // namespace

Tensor Model::phase_row_mask(const EncodedObservation& obs, int width) const {
  std::vector<double> m(static_cast<size_t>(cfg_.P_max) * width);
  for (int r = 0; r < cfg_.P_max; ++r)
    for (int c = 0; c < width; ++c)
      m[static_cast<size_t>(r) * width + c] = obs.phase_mask[static_cast<size_t>(r)];
  return Tensor::constant(std::move(m), cfg_.P_max, width);
}

GfeOut Model::gfe_forward(const EncodedObservation& obs, const Tensor& gru_hidden) const {
  check_obs(obs);
  if (gru_hidden.rows() != 1 || gru_hidden.cols() != cfg_.d)
    throw ValidationError("model: gru_hidden must be 1 x d");
  Tensor flat_s = Tensor::constant(masked_flat_s(obs), 1, cfg_.M_max * 8);
  Tensor h_s = mlp_s_.forward(flat_s);
  Tensor h_s2 = gru_.forward(h_s, gru_hidden);
  Mat g = obs.G;
  for (int p = 0; p < g.rows; ++p)
    for (int m = 0; m < g.cols; ++m) g.at(p, m) *= obs.movement_mask[static_cast<size_t>(m)];
  Tensor h_p = mlp_p_.forward(Tensor::constant(g));
  Tensor h_sp = gfe_attn_.forward(h_p, h_s2, {1.0});
  return {mul(h_sp, phase_row_mask(obs, cfg_.d)), h_s2};
}

IseOut Model::ise_forward(const EncodedObservation& obs, Rng& rng) const {
  check_obs(obs);
  const int ise_in = cfg_.ise_input_width();
  const Mat s = masked_s(obs);
  std::vector<double> x(static_cast<size_t>(cfg_.P_max) * ise_in);
  for (int p = 0; p < cfg_.P_max; ++p) {
    std::vector<double> g_row(obs.G.v.begin() + static_cast<size_t>(p) * cfg_.M_max,
                              obs.G.v.begin() + static_cast<size_t>(p + 1) * cfg_.M_max);
    std::vector<double> row = build_ise_input(s, masked_row(g_row, obs.movement_mask), obs.I);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<size_t>(p) * ise_in);
  }
  Tensor enc = vae_enc_.forward(Tensor::constant(std::move(x), cfg_.P_max, ise_in));
  Tensor mask_lat = phase_row_mask(obs, cfg_.d_vae);
  Tensor mu = mul(slice_cols(enc, 0, cfg_.d_vae), mask_lat);
  Tensor logsigma = mul(slice_cols(enc, cfg_.d_vae, 2 * cfg_.d_vae), mask_lat);

  // Standard-normal noise for real phase rows only: padding must not advance
  // the rng, or padded and unpadded runs would diverge.
  std::vector<double> eps(static_cast<size_t>(cfg_.P_max) * cfg_.d_vae, 0.0);
  for (int p = 0; p < cfg_.P_max; ++p)
    if (obs.phase_mask[static_cast<size_t>(p)] != 0.0)
      for (int c = 0; c < cfg_.d_vae; ++c)
        eps[static_cast<size_t>(p) * cfg_.d_vae + c] = rng.normal();
  Tensor z = add(mu, mul(exp_t(mul(logsigma, 0.5)),
                         Tensor::constant(std::move(eps), cfg_.P_max, cfg_.d_vae)));
  z = mul(z, phase_row_mask(obs, cfg_.d_vae));
  Tensor preds = mul(vae_dec_.forward(z), phase_row_mask(obs, cfg_.M_max * 8));
  return {mu, logsigma, z, preds};
}

Tensor Model::elbo_loss(const Tensor& pred, const Tensor& true_next_flat, const Tensor& mu_row,
                        const Tensor& logsigma_row) {
  if (pred.rows() != 1 || true_next_flat.rows() != 1 || pred.cols() != true_next_flat.cols())
    throw ValidationError("elbo: prediction and target must be matching single rows");
  if (mu_row.rows() != 1 || logsigma_row.rows() != 1 || mu_row.cols() != logsigma_row.cols())
    throw ValidationError("elbo: mu and logsigma must be matching single rows");
  Tensor diff = sub(pred, true_next_flat);
  Tensor recon = mean(mul(diff, diff));
  Tensor ones = Tensor::constant(std::vector<double>(mu_row.numel(), 1.0), 1, mu_row.cols());
  Tensor kl_terms = sub(add(exp_t(logsigma_row), mul(mu_row, mu_row)), add(ones, logsigma_row));
  return add(recon, mul(sum(kl_terms), 0.5));
}

HeadsOut Model::heads_forward(const EncodedObservation& obs, const Tensor& h_sp,
                              const Tensor& h_int) const {
  check_obs(obs);
  if (h_sp.rows() != cfg_.P_max || h_sp.cols() != cfg_.d || h_int.rows() != cfg_.P_max ||
      h_int.cols() != cfg_.d_vae)
    throw ValidationError("model: heads_forward inputs must be P_max x d and P_max x d_vae");
  Tensor h = concat_cols(h_sp, h_int);

  Tensor logit_col = f_pi_.forward(h);  // P_max x 1
  Tensor logits = gather(logit_col, 0, 0);
  for (int p = 1; p < cfg_.P_max; ++p) logits = concat_cols(logits, gather(logit_col, p, 0));
  Tensor mask_row = Tensor::constant(obs.phase_mask, 1, cfg_.P_max);
  Tensor policy = masked_softmax(logits, mask_row);

  Tensor h_a = mlp_a_.forward(
      Tensor::constant(masked_row(obs.U, obs.movement_mask), 1, cfg_.M_max));
  Tensor attended = act_attn_.forward(h, h_a, {1.0});
  Tensor h2 = concat_cols(h, attended);
  Tensor v_rows = mul(f_v_.forward(h2), phase_row_mask(obs, 1));
  return {h, logits, policy, sum(v_rows)};
}

AgentStep Model::act(const EncodedObservation& obs, const std::vector<double>& gru_hidden,
                     Rng& rng, ActMode mode) const {
  NoGradGuard ng;
  Tensor hidden = gru_hidden.empty()
                      ? zero_hidden()
                      : Tensor::constant(gru_hidden, 1, cfg_.d);
  GfeOut gfe = gfe_forward(obs, hidden);
  IseOut ise = ise_forward(obs, rng);
  HeadsOut heads = heads_forward(obs, gfe.h_sp, ise.mu);

  AgentStep step;
  auto to_mat = [](const Tensor& t) {
    Mat m(t.rows(), t.cols());
    m.v = t.data();
    return m;
  };
  step.h_sp = to_mat(gfe.h_sp);
  step.h_int = to_mat(ise.mu);
  step.mu = to_mat(ise.mu);
  step.logsigma = to_mat(ise.logsigma);
  step.preds = to_mat(ise.preds);
  step.policy = heads.policy.data();
  step.value = heads.value.item();
  step.gru_hidden = gfe.gru_hidden.data();

  const auto& p = step.policy;
  int action = 0;
  if (mode == ActMode::kGreedy) {
    for (int i = 1; i < cfg_.P_max; ++i)
      if (p[static_cast<size_t>(i)] > p[static_cast<size_t>(action)]) action = i;
  } else {
    const double r = rng.uniform();
    double cum = 0.0;
    action = -1;
    for (int i = 0; i < cfg_.P_max; ++i) {
      cum += p[static_cast<size_t>(i)];
      if (r < cum) {
        action = i;
        break;
      }
    }
    if (action < 0) {  // float round-off: fall back to the last real phase
      for (int i = cfg_.P_max - 1; i >= 0; --i)
        if (obs.phase_mask[static_cast<size_t>(i)] != 0.0) {
          action = i;
          break;
        }
    }
  }
  step.action = action;
  step.log_prob = std::log(p[static_cast<size_t>(action)]);
  return step;
}

}  // namespace unicorn
