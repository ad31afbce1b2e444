#include "ldcq/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ldcq::vae {

using namespace ldcq::nn;

namespace {

// element inputs: current state, latent, previously produced action elements
int dec_input_width(const VaeModel& m, int element) {
  return m.env.state_dim + m.cfg.latent_dim + element;
}

std::string elem_prefix(int k) { return "dec.e" + std::to_string(k); }

}  // namespace

nn::MlpSpec VaeModel::dec_body_spec(int element) const {
  return MlpSpec{dec_input_width(*this, element),
                 {cfg.hidden, cfg.hidden},
                 cfg.hidden,
                 Act::ReLU,
                 Act::ReLU,
                 false};
}

nn::MlpSpec VaeModel::dec_head_spec(bool std_head) const {
  return MlpSpec{cfg.hidden,          {cfg.hidden}, 1, Act::ReLU,
                 std_head ? Act::SoftPlus : Act::Linear, false};
}

VaeModel VaeModel::create(const envs::EnvDescriptor& env, int horizon,
                          const VaeConfig& cfg, Rng& rng) {
  if (cfg.beta <= 0.0) throw std::invalid_argument("VaeConfig: beta must be > 0");
  if (cfg.latent_dim < 1) throw std::invalid_argument("VaeConfig: latent_dim >= 1");
  VaeModel m;
  m.cfg = cfg;
  m.env = env;
  m.horizon = horizon;
  m.enc_gru = BiGruSpec{env.state_dim + env.action_dim, cfg.hidden, cfg.gru_layers};
  const MlpSpec head{2 * cfg.hidden, {cfg.hidden}, cfg.latent_dim,
                     Act::ReLU,      Act::Linear,  false};
  m.enc_mean = head;
  m.enc_std = head;
  m.enc_std.output_act = Act::SoftPlus;
  m.prior_body = MlpSpec{env.state_dim, {cfg.hidden, cfg.hidden}, cfg.hidden,
                         Act::ReLU,     Act::ReLU,                false};
  m.prior_mean = MlpSpec{cfg.hidden, {}, cfg.latent_dim, Act::ReLU, Act::Linear, false};
  m.prior_std = MlpSpec{cfg.hidden, {}, cfg.latent_dim, Act::ReLU, Act::SoftPlus, false};

  init_bigru(m.params, "enc.gru", m.enc_gru, rng);
  init_mlp(m.params, "enc.mean", m.enc_mean, rng);
  init_mlp(m.params, "enc.std", m.enc_std, rng);
  init_mlp(m.params, "prior.body", m.prior_body, rng);
  init_mlp(m.params, "prior.mean", m.prior_mean, rng);
  init_mlp(m.params, "prior.std", m.prior_std, rng);
  for (int k = 0; k < env.action_dim; ++k) {
    init_mlp(m.params, elem_prefix(k) + ".body", m.dec_body_spec(k), rng);
    init_mlp(m.params, elem_prefix(k) + ".mean", m.dec_head_spec(false), rng);
    init_mlp(m.params, elem_prefix(k) + ".std", m.dec_head_spec(true), rng);
  }
  return m;
}

nlohmann::json VaeModel::meta() const {
  nlohmann::json j;
  j["env"] = env.to_json();
  j["horizon"] = horizon;
  j["latent_dim"] = cfg.latent_dim;
  j["beta"] = cfg.beta;
  j["hidden"] = cfg.hidden;
  j["gru_layers"] = cfg.gru_layers;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  return j;
}

nn::Checkpoint VaeModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta = meta();
  ckpt.meta["kind"] = "vae";
  ckpt.bundles["vae"] = params;
  return ckpt;
}

VaeModel VaeModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto& j = ckpt.meta;
  VaeConfig cfg;
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.beta = j.at("beta").get<double>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.gru_layers = j.at("gru_layers").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  Rng dummy(0);
  VaeModel m = create(envs::EnvDescriptor::from_json(j.at("env")),
                      j.at("horizon").get<int>(), cfg, dummy);
  m.params = ckpt.bundles.at("vae");
  return m;
}

namespace {

std::vector<Mat> snippet_sequence(const VaeModel& m,
                                  const std::vector<const data::SkillSnippet*>& sns) {
  const int B = static_cast<int>(sns.size());
  const int sw = m.env.state_dim, aw = m.env.action_dim;
  std::vector<Mat> seq(m.horizon, Mat(sw + aw, B));
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < m.horizon; ++t) {
      seq[t].col(b).head(sw) = sns[b]->states[t];
      seq[t].col(b).tail(aw) = sns[b]->actions[t];
    }
  return seq;
}

GaussianHeadBatch heads_from_feature(const VaeModel& m, const Mat& feature) {
  GaussianHeadBatch out;
  out.mean = mlp_forward_raw(m.enc_mean, m.params, "enc.mean", feature);
  out.std = mlp_forward_raw(m.enc_std, m.params, "enc.std", feature);
  return out;
}

}  // namespace

GaussianHead encode_posterior(const VaeModel& m, const data::SkillSnippet& sn) {
  if (!sn.full(m.horizon))
    throw std::invalid_argument(
        "encode_posterior: partial snippet (steps_valid < H) rejected");
  auto batch = encode_posterior_batch(m, {&sn});
  return {batch.mean.col(0), batch.std.col(0)};
}

GaussianHeadBatch encode_posterior_batch(
    const VaeModel& m, const std::vector<const data::SkillSnippet*>& sns) {
  if (sns.empty()) throw std::invalid_argument("encode_posterior_batch: empty");
  const auto seq = snippet_sequence(m, sns);
  const Mat feature = bigru_encode_raw(m.enc_gru, m.params, "enc.gru", seq);
  return heads_from_feature(m, feature);
}

GaussianHead gaussian_prior(const VaeModel& m, const VectorXd& s0) {
  if (s0.size() != m.env.state_dim)
    throw std::invalid_argument("gaussian_prior: state width mismatch");
  auto batch = gaussian_prior_batch(m, s0);
  return {batch.mean.col(0), batch.std.col(0)};
}

GaussianHeadBatch gaussian_prior_batch(const VaeModel& m, const Mat& s0) {
  const Mat body = mlp_forward_raw(m.prior_body, m.params, "prior.body", s0);
  GaussianHeadBatch out;
  out.mean = mlp_forward_raw(m.prior_mean, m.params, "prior.mean", body);
  out.std = mlp_forward_raw(m.prior_std, m.params, "prior.std", body);
  return out;
}

GaussianHead decode_action(const VaeModel& m, const VectorXd& s, const VectorXd& z,
                           const VectorXd& prefix) {
  const int k = static_cast<int>(prefix.size());
  if (k >= m.env.action_dim)
    throw std::invalid_argument("decode_action: prefix covers the whole action");
  VectorXd input(dec_input_width(m, k));
  input << s, z, prefix;
  const Mat body = mlp_forward_raw(m.dec_body_spec(k), m.params,
                                   elem_prefix(k) + ".body", input);
  GaussianHead head;
  head.mean = mlp_forward_raw(m.dec_head_spec(false), m.params,
                              elem_prefix(k) + ".mean", body);
  head.std = mlp_forward_raw(m.dec_head_spec(true), m.params,
                             elem_prefix(k) + ".std", body);
  return head;
}

VectorXd decode_full_action(const VaeModel& m, const VectorXd& s, const VectorXd& z,
                            Rng* rng) {
  VectorXd action(m.env.action_dim);
  VectorXd prefix(0);
  for (int k = 0; k < m.env.action_dim; ++k) {
    const GaussianHead head = decode_action(m, s, z, prefix);
    double a = head.mean(0);
    if (rng) a += head.std(0) * rng->normal();
    action(k) = a;
    prefix.conservativeResize(k + 1);
    prefix(k) = a;
  }
  return action;
}

double gaussian_log_density(double x, double mean, double std) {
  const double d = (x - mean) / std;
  return -0.5 * std::log(2.0 * M_PI) - std::log(std) - 0.5 * d * d;
}

double diag_gaussian_kl(const VectorXd& mean_q, const VectorXd& std_q,
                        const VectorXd& mean_p, const VectorXd& std_p) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mean_q.size(); ++i) {
    const double r = std_q(i) / std_p(i);
    const double d = (mean_q(i) - mean_p(i)) / std_p(i);
    kl += -std::log(r) + 0.5 * (r * r + d * d) - 0.5;
  }
  return kl;
}

VaeLossParts vae_loss(const VaeModel& m, nn::Graph& g, const nn::BoundParams& p,
                      const std::vector<const data::SkillSnippet*>& batch,
                      const Mat& eps) {
  if (batch.empty()) throw std::invalid_argument("vae_loss: empty batch");
  for (const auto* sn : batch)
    if (!sn->full(m.horizon))
      throw std::invalid_argument("vae_loss: partial snippet in batch");
  const int B = static_cast<int>(batch.size());
  const int sw = m.env.state_dim, aw = m.env.action_dim;

  // encoder
  const auto seq_raw = snippet_sequence(m, batch);
  std::vector<Var> seq;
  seq.reserve(seq_raw.size());
  for (const auto& s : seq_raw) seq.push_back(g.input(s));
  Var feature = bigru_encode(m.enc_gru, p, "enc.gru", seq);
  Var q_mean = mlp_forward(m.enc_mean, p, "enc.mean", feature);
  Var q_std = mlp_forward(m.enc_std, p, "enc.std", feature);

  // z = mean + std . eps
  Var z = add(q_mean, mul(q_std, g.input(eps)));

  // prior heads on s0
  Mat s0(sw, B);
  for (int b = 0; b < B; ++b) s0.col(b) = batch[b]->states[0];
  Var body = mlp_forward(m.prior_body, p, "prior.body", g.input(s0));
  Var p_mean = mlp_forward(m.prior_mean, p, "prior.mean", body);
  Var p_std = mlp_forward(m.prior_std, p, "prior.std", body);

  // teacher-forced reconstruction: per step t, per element k
  Var nll_acc;  // 1 x B accumulator
  bool first = true;
  const double log2pi = std::log(2.0 * M_PI);
  for (int t = 0; t < m.horizon; ++t) {
    Mat st(sw, B), at(aw, B);
    for (int b = 0; b < B; ++b) {
      st.col(b) = batch[b]->states[t];
      at.col(b) = batch[b]->actions[t];
    }
    Var st_v = g.input(st);
    for (int k = 0; k < aw; ++k) {
      std::vector<Var> parts{st_v, z};
      if (k > 0) parts.push_back(g.input(Mat(at.topRows(k))));
      Var input = concat_rows(parts);
      Var hbody = mlp_forward(m.dec_body_spec(k), p, elem_prefix(k) + ".body", input);
      Var mean_k =
          mlp_forward(m.dec_head_spec(false), p, elem_prefix(k) + ".mean", hbody);
      Var std_k = mlp_forward(m.dec_head_spec(true), p, elem_prefix(k) + ".std", hbody);
      Var target = g.input(Mat(at.row(k)));
      Var delta = cdiv(sub(target, mean_k), std_k);
      // -log N = 0.5 log 2pi + log std + 0.5 delta^2
      Var nll = add_scalar(add(log_(std_k), scale(square(delta), 0.5)), 0.5 * log2pi);
      nll_acc = first ? nll : add(nll_acc, nll);
      first = false;
    }
  }

  // KL(q || p) per example, closed form for diagonal Gaussians
  Var ratio = cdiv(q_std, p_std);
  Var dmean = cdiv(sub(q_mean, p_mean), p_std);
  Var kl_terms = add_scalar(
      add(neg(log_(ratio)), scale(add(square(ratio), square(dmean)), 0.5)), -0.5);
  Var kl = sum_rows(kl_terms);  // 1 x B

  Var per_example = add(nll_acc, scale(kl, m.cfg.beta));
  VaeLossParts parts;
  parts.loss = mean_all(per_example);
  parts.recon_nll = nll_acc.value().mean();
  parts.kl = kl.value().mean();
  return parts;
}

VaeTrainResult train_vae(const data::Dataset& ds, int horizon, const VaeConfig& cfg,
                         std::uint64_t seed,
                         const std::function<void(int, double)>& on_epoch) {
  const auto snippets = data::slice_snippets(ds, horizon, 1);
  std::vector<const data::SkillSnippet*> full;
  for (const auto& sn : snippets)
    if (sn.full(horizon)) full.push_back(&sn);
  if (full.empty()) throw std::invalid_argument("train_vae: no full snippets");

  Rng root(seed);
  Rng init_rng = root.stream("vae.init");
  VaeTrainResult res;
  res.model = VaeModel::create(ds.env, horizon, cfg, init_rng);
  OptState opt;
  opt.lr = cfg.lr;

  ParameterBundle snapshot = res.model.params;
  Rng shuffle_rng = root.stream("vae.shuffle");
  Rng eps_rng = root.stream("vae.eps");
  std::vector<int> order(full.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with our rng to keep runs reproducible
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::vector<const data::SkillSnippet*> batch;
      for (std::size_t i = at; i < std::min(order.size(), at + cfg.batch_size); ++i)
        batch.push_back(full[order[i]]);
      Graph g;
      BoundParams p(g, res.model.params);
      const Mat eps =
          eps_rng.normal_matrix(cfg.latent_dim, static_cast<int>(batch.size()));
      try {
        auto parts = vae_loss(res.model, g, p, batch, eps);
        g.backward(parts.loss);
        adam_step(opt, res.model.params, p.grads());
        epoch_loss += parts.loss.value()(0, 0);
      } catch (const TrainingDivergence&) {
        res.model.params = snapshot;  // last finite epoch retained
        res.diverged = true;
        return res;
      }
      ++batches;
    }
    epoch_loss /= std::max(1, batches);
    res.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
    if (!std::isfinite(epoch_loss) || !res.model.params.all_finite()) {
      res.model.params = snapshot;
      res.diverged = true;
      return res;
    }
    snapshot = res.model.params;
  }
  return res;
}

LatentDataset make_latent_dataset(const data::Dataset& ds,
                                  const std::vector<data::SkillSnippet>& snippets,
                                  const VaeModel& m, bool goal_conditioned, Rng& rng) {
  std::vector<const data::SkillSnippet*> full;
  for (const auto& sn : snippets)
    if (sn.full(m.horizon)) full.push_back(&sn);
  if (full.empty()) throw std::invalid_argument("make_latent_dataset: no full snippets");
  if (goal_conditioned && !m.env.has_goal)
    throw std::invalid_argument("make_latent_dataset: env has no goal space");

  const int N = static_cast<int>(full.size());
  const auto heads = encode_posterior_batch(m, full);
  LatentDataset out;
  out.latent_dim = m.cfg.latent_dim;
  out.cond_dim = m.env.state_dim + (goal_conditioned ? m.env.goal_dim : 0);
  out.cond.resize(out.cond_dim, N);
  out.z0.resize(out.latent_dim, N);
  for (int i = 0; i < N; ++i) {
    const auto* sn = full[i];
    out.z0.col(i) =
        heads.mean.col(i) + heads.std.col(i).cwiseProduct(rng.normal_vector(out.latent_dim));
    out.cond.col(i).head(m.env.state_dim) = sn->states[0];
    if (goal_conditioned) {
      // hindsight goal: a state at least H steps ahead of the window start
      const auto& ep = ds.episodes[sn->episode];
      const long lo = sn->start + m.horizon;
      const long hi = static_cast<long>(ep.states.size()) - 1;
      const long pick = lo >= hi ? hi : rng.uniform_int(lo, hi);
      out.cond.col(i).tail(m.env.goal_dim) = ep.states[pick].head(m.env.goal_dim);
    }
  }
  return out;
}

}  // namespace ldcq::vae
