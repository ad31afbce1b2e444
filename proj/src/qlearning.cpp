#include "ldcq/qlearning.hpp"

#include <cmath>
#include <sstream>

namespace ldcq::qlearn {

using namespace ldcq::nn;

void LdcqConfig::validate() const {
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("LdcqConfig: gamma in [0,1)");
  if (rho <= 0.0 || rho > 1.0) throw std::invalid_argument("LdcqConfig: rho in (0,1]");
  if (candidates < 1) throw std::invalid_argument("LdcqConfig: candidates >= 1");
  if (batch_size < 1 || iterations < 1)
    throw std::invalid_argument("LdcqConfig: batch/iterations >= 1");
}

Mat DiffusionCandidateSampler::sample(const Mat& conds, int n, Rng& rng) {
  ++calls;
  latents_produced += conds.cols() * n;
  return diffusion::ddpm_sample_batch(prior_, conds, n, guidance_, rng);
}

Mat GaussianPriorCandidateSampler::sample(const Mat& conds, int n, Rng& rng) {
  ++calls;
  latents_produced += conds.cols() * n;
  const auto heads = vae::gaussian_prior_batch(vae_, conds);
  const int B = static_cast<int>(conds.cols());
  const int d = static_cast<int>(heads.mean.rows());
  Mat out(d, B * n);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < n; ++i)
      out.col(j * n + i) =
          heads.mean.col(j) + heads.std.col(j).cwiseProduct(rng.normal_vector(d));
  return out;
}

std::string DatasetCandidateSampler::key_of(const Eigen::VectorXd& state) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < state.size(); ++i)
    os << std::llround(state(i) * 1e6) << ",";
  return os.str();
}

void DatasetCandidateSampler::add(const Eigen::VectorXd& state, const Eigen::VectorXd& z) {
  support_[key_of(state)].push_back(z);
}

int DatasetCandidateSampler::support_size(const Eigen::VectorXd& state) const {
  auto it = support_.find(key_of(state));
  return it == support_.end() ? 0 : static_cast<int>(it->second.size());
}

Mat DatasetCandidateSampler::sample(const Mat& conds, int n, Rng&) {
  ++calls;
  latents_produced += conds.cols() * n;
  const int B = static_cast<int>(conds.cols());
  Mat out;
  for (int j = 0; j < B; ++j) {
    auto it = support_.find(key_of(conds.col(j)));
    if (it == support_.end() || it->second.empty())
      throw std::runtime_error("DatasetCandidateSampler: state without support");
    const auto& zs = it->second;
    if (out.size() == 0) out.resize(zs[0].size(), B * n);
    for (int i = 0; i < n; ++i) out.col(j * n + i) = zs[i % zs.size()];
  }
  return out;
}

QNetSpec QNetSpec::make(int state_dim, int z_dim, int hidden) {
  QNetSpec spec;
  spec.state_dim = state_dim;
  spec.z_dim = z_dim;
  spec.mlp = MlpSpec{state_dim + z_dim, {hidden, hidden, hidden, 32}, 1,
                     Act::GELU,         Act::Linear,
                     /*layer_norm=*/true};
  return spec;
}

Eigen::RowVectorXd q_values(const QNetSpec& spec, const nn::ParameterBundle& b,
                            const Mat& states, const Mat& latents) {
  if (states.cols() != latents.cols())
    throw std::invalid_argument("q_values: batch size mismatch");
  Mat input(spec.state_dim + spec.z_dim, states.cols());
  input.topRows(spec.state_dim) = states;
  input.bottomRows(spec.z_dim) = latents;
  return mlp_forward_raw(spec.mlp, b, "q", input).row(0);
}

QEval make_q_eval(const QNetSpec& spec, const nn::ParameterBundle& b) {
  return [&spec, &b](const Mat& states, const Mat& latents) {
    return q_values(spec, b, states, latents);
  };
}

PrioritizedBuffer build_skill_buffer(const data::Dataset& ds, const vae::VaeModel& m,
                                     int H, double gamma, int stride, Rng& rng) {
  if (ds.episodes.empty()) throw std::invalid_argument("build_skill_buffer: empty dataset");
  const auto snippets = data::slice_snippets(ds, H, stride);
  std::vector<const data::SkillSnippet*> ptrs;
  ptrs.reserve(snippets.size());
  for (const auto& sn : snippets) ptrs.push_back(&sn);
  const auto heads = vae::encode_posterior_batch(m, ptrs);
  const int d = m.cfg.latent_dim;
  PrioritizedBuffer buffer(static_cast<int>(snippets.size()));
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    const auto& sn = snippets[i];
    SkillTransition t;
    t.s = sn.states[0];
    t.z = heads.mean.col(i) + heads.std.col(i).cwiseProduct(rng.normal_vector(d));
    t.ret = data::discounted_return(sn.rewards, sn.steps_valid, gamma);
    t.s_next = sn.next_state;
    t.terminal = sn.terminal_within;
    t.steps_valid = sn.steps_valid;
    buffer.add(std::move(t));
  }
  return buffer;
}

Eigen::VectorXd td_target(const std::vector<const SkillTransition*>& batch,
                          const QEval& q1_target, const QEval& q2_target,
                          CandidateSampler& sampler, const LdcqConfig& cfg, Rng& rng) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw std::invalid_argument("td_target: empty batch");
  const int n = cfg.candidates;
  const int sdim = static_cast<int>(batch[0]->s_next.size());
  Mat conds(sdim, B);
  for (int j = 0; j < B; ++j) conds.col(j) = batch[j]->s_next;
  const Mat latents = sampler.sample(conds, n, rng);
  Mat states_rep(sdim, B * n);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < n; ++i) states_rep.col(j * n + i) = batch[j]->s_next;
  const Eigen::RowVectorXd v1 = q1_target(states_rep, latents);
  const Eigen::RowVectorXd v2 = q2_target(states_rep, latents);
  Eigen::VectorXd y(B);
  for (int j = 0; j < B; ++j) {
    const auto& tr = *batch[j];
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const int c = j * n + i;
      best = std::max(best, std::min(v1(c), v2(c)));
    }
    y(j) = tr.ret;
    if (!tr.terminal) y(j) += std::pow(cfg.gamma, tr.steps_valid) * best;
  }
  return y;
}

namespace {

double weighted_mse_step(const QNetSpec& spec, nn::ParameterBundle& b, nn::OptState& opt,
                         const Mat& input, const Eigen::RowVectorXd& y,
                         const Eigen::RowVectorXd& w, Eigen::RowVectorXd& residual_out) {
  Graph g;
  BoundParams p(g, b);
  Var q = mlp_forward(spec.mlp, p, "q", g.input(input));
  Var delta = sub(g.input(Mat(y)), q);
  Var weighted = mul_row_broadcast(square(delta), g.input(Mat(w)));
  Var loss = mean_all(weighted);
  g.backward(loss);
  adam_step(opt, b, p.grads());
  residual_out = delta.value().row(0);
  return loss.value()(0, 0);
}

}  // namespace

QUpdateResult q_update(const QNetSpec& spec, nn::ParameterBundle& q1,
                       nn::ParameterBundle& q2, nn::OptState& opt1, nn::OptState& opt2,
                       const std::vector<const SkillTransition*>& batch,
                       const Eigen::VectorXd& y, const std::vector<double>& weights) {
  const int B = static_cast<int>(batch.size());
  if (static_cast<int>(weights.size()) != B || y.size() != B)
    throw std::invalid_argument("q_update: batch size mismatch");
  Mat input(spec.state_dim + spec.z_dim, B);
  for (int j = 0; j < B; ++j) {
    input.col(j).head(spec.state_dim) = batch[j]->s;
    input.col(j).tail(spec.z_dim) = batch[j]->z;
  }
  const Eigen::RowVectorXd yt = y.transpose();
  Eigen::RowVectorXd w(B);
  for (int j = 0; j < B; ++j) w(j) = weights[j];
  QUpdateResult res;
  Eigen::RowVectorXd r1, r2;
  res.loss1 = weighted_mse_step(spec, q1, opt1, input, yt, w, r1);
  res.loss2 = weighted_mse_step(spec, q2, opt2, input, yt, w, r2);
  res.td_errors = 0.5 * (r1.cwiseAbs() + r2.cwiseAbs()).transpose();
  return res;
}

void target_soft_update(const nn::ParameterBundle& online, nn::ParameterBundle& target,
                        double rho, bool swap_mixing) {
  const double on_coef = swap_mixing ? 1.0 - rho : rho;
  for (auto& [name, t] : target.items()) {
    const Mat& o = online.at(name);
    if (o.rows() != t.rows() || o.cols() != t.cols())
      throw std::invalid_argument("target_soft_update: shape mismatch for " + name);
    t = on_coef * o + (1.0 - on_coef) * t;
  }
}

nn::Checkpoint QLearnResult::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "qnets";
  ckpt.meta["state_dim"] = spec.state_dim;
  ckpt.meta["z_dim"] = spec.z_dim;
  ckpt.meta["hidden"] = spec.mlp.hidden.empty() ? 0 : spec.mlp.hidden[0];
  ckpt.bundles["q1"] = q1;
  ckpt.bundles["q2"] = q2;
  ckpt.bundles["q1_target"] = q1_target;
  ckpt.bundles["q2_target"] = q2_target;
  return ckpt;
}

QLearnResult QLearnResult::from_checkpoint(const nn::Checkpoint& ckpt) {
  QLearnResult res;
  res.spec = QNetSpec::make(ckpt.meta.at("state_dim").get<int>(),
                            ckpt.meta.at("z_dim").get<int>(),
                            ckpt.meta.at("hidden").get<int>());
  res.q1 = ckpt.bundles.at("q1");
  res.q2 = ckpt.bundles.at("q2");
  res.q1_target = ckpt.bundles.at("q1_target");
  res.q2_target = ckpt.bundles.at("q2_target");
  return res;
}

QLearnResult ldcq_train(PrioritizedBuffer& buffer, CandidateSampler& sampler,
                        const LdcqConfig& cfg, int state_dim, int z_dim,
                        std::uint64_t seed,
                        const std::function<void(long, double)>& on_log) {
  cfg.validate();
  if (buffer.size() == 0) throw std::invalid_argument("ldcq_train: empty buffer");
  Rng root(seed);
  Rng init_rng = root.stream("q.init");
  QLearnResult res;
  res.spec = QNetSpec::make(state_dim, z_dim, cfg.q_hidden);
  init_mlp(res.q1, "q", res.spec.mlp, init_rng);
  init_mlp(res.q2, "q", res.spec.mlp, init_rng);
  res.q1_target = res.q1;
  res.q2_target = res.q2;
  OptState opt1, opt2;
  opt1.lr = opt2.lr = cfg.lr;

  Rng sample_rng = root.stream("q.sample");
  Rng cand_rng = root.stream("q.candidates");
  const long log_every = std::max<long>(1, cfg.iterations / 200);
  double loss_acc = 0.0;
  long loss_count = 0;

  ParameterBundle snap1 = res.q1, snap2 = res.q2;
  for (long iter = 0; iter < cfg.iterations; ++iter) {
    buffer.set_train_step(iter);
    const auto batch_idx = buffer.sample(cfg.batch_size, sample_rng);
    std::vector<const SkillTransition*> batch;
    batch.reserve(batch_idx.indices.size());
    for (int idx : batch_idx.indices) batch.push_back(&buffer.at(idx));

    const QEval q1t = make_q_eval(res.spec, res.q1_target);
    const QEval q2t = make_q_eval(res.spec, res.q2_target);
    const Eigen::VectorXd y = td_target(batch, q1t, q2t, sampler, cfg, cand_rng);

    try {
      const auto upd = q_update(res.spec, res.q1, res.q2, opt1, opt2, batch, y,
                                batch_idx.weights);
      loss_acc += 0.5 * (upd.loss1 + upd.loss2);
      ++loss_count;
      std::vector<double> errs(upd.td_errors.data(),
                               upd.td_errors.data() + upd.td_errors.size());
      buffer.update_priorities(batch_idx.indices, errs);
    } catch (const TrainingDivergence&) {
      res.q1 = snap1;
      res.q2 = snap2;
      res.diverged = true;
      return res;
    }
    target_soft_update(res.q1, res.q1_target, cfg.rho, cfg.swap_mixing);
    target_soft_update(res.q2, res.q2_target, cfg.rho, cfg.swap_mixing);

    if ((iter + 1) % log_every == 0) {
      const double mean_loss = loss_acc / std::max<long>(1, loss_count);
      res.td_curve.push_back(mean_loss);
      if (on_log) on_log(iter + 1, mean_loss);
      if (!std::isfinite(mean_loss)) {
        res.q1 = snap1;
        res.q2 = snap2;
        res.diverged = true;
        return res;
      }
      snap1 = res.q1;
      snap2 = res.q2;
      loss_acc = 0.0;
      loss_count = 0;
    }
  }
  return res;
}

}  // namespace ldcq::qlearn
