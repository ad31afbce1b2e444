#include "ldcq/diffusion.hpp"

#include <cmath>
#include <numeric>

#include "ldcq/errors.hpp"

namespace ldcq::diffusion {

using namespace ldcq::nn;

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_min, double beta_max) {
  if (T < 1) throw ConfigError("DiffusionSchedule: T >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw ConfigError("DiffusionSchedule: need 0 < beta_min <= beta_max < 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta.resize(T);
  for (int i = 0; i < T; ++i)
    s.beta(i) = T == 1 ? beta_min
                       : beta_min + (beta_max - beta_min) * i / static_cast<double>(T - 1);
  s.alpha = 1.0 - s.beta.array();
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) s.alpha_bar(i) = prod *= s.alpha(i);
  return s;
}

void DiffusionSchedule::check_t(int t) const {
  if (t < 1 || t > T)
    throw std::invalid_argument("diffusion: t out of range [1, T]");
}

nlohmann::json DiffusionSchedule::to_json() const {
  nlohmann::json j;
  j["T"] = T;
  j["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
  return j;
}

DiffusionSchedule DiffusionSchedule::from_json(const nlohmann::json& j) {
  DiffusionSchedule s;
  s.T = j.at("T").get<int>();
  auto b = j.at("beta").get<std::vector<double>>();
  s.beta = Eigen::Map<VectorXd>(b.data(), b.size());
  s.alpha = 1.0 - s.beta.array();
  s.alpha_bar.resize(s.T);
  double prod = 1.0;
  for (int i = 0; i < s.T; ++i) s.alpha_bar(i) = prod *= s.alpha(i);
  return s;
}

Mat forward_noise(const DiffusionSchedule& s, const Mat& z0, int t, const Mat& eps) {
  s.check_t(t);
  if (eps.rows() != z0.rows() || eps.cols() != z0.cols())
    throw std::invalid_argument("forward_noise: eps shape mismatch");
  const double ab = s.alpha_bar_at(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

Mat forward_noise_step(const DiffusionSchedule& s, const Mat& z_prev, int t,
                       const Mat& eps) {
  s.check_t(t);
  return std::sqrt(s.alpha_at(t)) * z_prev + std::sqrt(s.beta_at(t)) * eps;
}

double min_snr_weight(const DiffusionSchedule& s, int t, double clip) {
  s.check_t(t);
  const double ab = s.alpha_bar_at(t);
  const double snr = ab / (1.0 - ab);
  return std::min(snr, clip);
}

PriorModel PriorModel::create(int latent_dim, int cond_dim, const nn::DenoiserSpec& base,
                              const PriorTrainConfig& cfg, Rng& rng) {
  if (cfg.drop_prob < 0.0 || cfg.drop_prob >= 1.0)
    throw ConfigError("PriorTrainConfig: drop_prob in [0, 1)");
  PriorModel m;
  m.spec = base;
  m.spec.latent_dim = latent_dim;
  m.spec.cond_dim = cond_dim;
  m.cfg = cfg;
  m.sched = DiffusionSchedule::linear(cfg.T, cfg.beta_min, cfg.beta_max);
  init_denoiser(m.psi, "psi", m.spec, rng);
  return m;
}

nn::Checkpoint PriorModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "prior";
  ckpt.meta["latent_dim"] = spec.latent_dim;
  ckpt.meta["cond_dim"] = spec.cond_dim;
  ckpt.meta["time_dim"] = spec.time_dim;
  ckpt.meta["enc_hidden"] = spec.enc_hidden;
  ckpt.meta["blocks"] = spec.blocks;
  ckpt.meta["schedule"] = sched.to_json();
  ckpt.meta["goal_conditioned"] = goal_conditioned;
  ckpt.meta["lr"] = cfg.lr;
  ckpt.meta["batch_size"] = cfg.batch_size;
  ckpt.meta["epochs"] = cfg.epochs;
  ckpt.meta["T"] = cfg.T;
  ckpt.meta["beta_min"] = cfg.beta_min;
  ckpt.meta["beta_max"] = cfg.beta_max;
  ckpt.meta["drop_prob"] = cfg.drop_prob;
  ckpt.meta["snr_clip"] = cfg.snr_clip;
  ckpt.bundles["psi"] = psi;
  return ckpt;
}

PriorModel PriorModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto& j = ckpt.meta;
  PriorModel m;
  m.spec.latent_dim = j.at("latent_dim").get<int>();
  m.spec.cond_dim = j.at("cond_dim").get<int>();
  m.spec.time_dim = j.at("time_dim").get<int>();
  m.spec.enc_hidden = j.at("enc_hidden").get<int>();
  m.spec.blocks = j.at("blocks").get<std::vector<int>>();
  m.sched = DiffusionSchedule::from_json(j.at("schedule"));
  m.goal_conditioned = j.at("goal_conditioned").get<bool>();
  m.cfg.lr = j.at("lr").get<double>();
  m.cfg.batch_size = j.at("batch_size").get<int>();
  m.cfg.epochs = j.at("epochs").get<int>();
  m.cfg.T = j.at("T").get<int>();
  m.cfg.beta_min = j.at("beta_min").get<double>();
  m.cfg.beta_max = j.at("beta_max").get<double>();
  m.cfg.drop_prob = j.at("drop_prob").get<double>();
  m.cfg.snr_clip = j.at("snr_clip").get<double>();
  m.psi = ckpt.bundles.at("psi");
  return m;
}

namespace {

Mat time_embed_columns(const nn::DenoiserSpec& spec, int t, Eigen::Index cols) {
  const VectorXd e = sinusoidal_embed(t, spec.time_dim);
  return e.replicate(1, cols);
}

}  // namespace

Mat denoise_predict(const PriorModel& m, const Mat& z_t, const Mat* cond, int t) {
  m.sched.check_t(t);
  const Mat null_token = Mat::Zero(m.spec.cond_dim, z_t.cols());
  const Mat& c = cond ? *cond : null_token;
  return denoiser_forward_raw(m.spec, m.psi, "psi", z_t, c,
                              time_embed_columns(m.spec, t, z_t.cols()));
}

Mat guided_predict(const PriorModel& m, const Mat& z_t, const Mat& cond, int t,
                   double w) {
  if (w == 0.0) return denoise_predict(m, z_t, nullptr, t);
  if (w == 1.0) return denoise_predict(m, z_t, &cond, t);
  const Mat uncond = denoise_predict(m, z_t, nullptr, t);
  const Mat conded = denoise_predict(m, z_t, &cond, t);
  return uncond + w * (conded - uncond);
}

double weighted_denoise_error(const VectorXd& z0, const VectorXd& zhat, double weight) {
  return weight * (z0 - zhat).squaredNorm();
}

double diffusion_loss_impl(const PredictFn& predict, const Mat& cond, const Mat& z0,
                           const DiffusionSchedule& s, const PriorTrainConfig& cfg,
                           Rng& rng) {
  const int B = static_cast<int>(z0.cols());
  double acc = 0.0;
  for (int b = 0; b < B; ++b) {
    const int t = static_cast<int>(rng.uniform_int(1, s.T));
    const Mat eps = rng.normal_matrix(static_cast<int>(z0.rows()), 1);
    const Mat z_t = forward_noise(s, z0.col(b), t, eps);
    Mat c = cond.col(b);
    if (rng.uniform() < cfg.drop_prob) c.setZero();
    const double w = min_snr_weight(s, t, cfg.snr_clip);
    const Mat zhat = predict(z_t, c, t);
    acc += weighted_denoise_error(z0.col(b), zhat.col(0), w);
  }
  return acc / B;
}

double diffusion_loss(const PriorModel& m, const Mat& cond, const Mat& z0, Rng& rng) {
  return diffusion_loss_impl(
      [&](const Mat& z_t, const Mat& c, int t) { return denoise_predict(m, z_t, &c, t); },
      cond, z0, m.sched, m.cfg, rng);
}

PriorTrainResult train_prior(const vae::LatentDataset& data, const nn::DenoiserSpec& base,
                             const PriorTrainConfig& cfg, bool goal_conditioned,
                             std::uint64_t seed,
                             const std::function<void(int, double)>& on_epoch) {
  if (data.z0.cols() == 0) throw std::invalid_argument("train_prior: empty dataset");
  Rng root(seed);
  Rng init_rng = root.stream("prior.init");
  PriorTrainResult res;
  res.model = PriorModel::create(data.latent_dim, data.cond_dim, base, cfg, init_rng);
  res.model.goal_conditioned = goal_conditioned;
  OptState opt;
  opt.lr = cfg.lr;

  Rng shuffle_rng = root.stream("prior.shuffle");
  Rng noise_rng = root.stream("prior.noise");
  const int N = static_cast<int>(data.z0.cols());
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  ParameterBundle snapshot = res.model.psi;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = N - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int at = 0; at < N; at += cfg.batch_size) {
      const int B = std::min(cfg.batch_size, N - at);
      // assemble the batch with per-example t, noise, and conditioning drop
      Mat z_t(data.latent_dim, B), cond(data.cond_dim, B), z0(data.latent_dim, B);
      Mat t_embed(res.model.spec.time_dim, B);
      Eigen::RowVectorXd weights(B);
      for (int b = 0; b < B; ++b) {
        const int idx = order[at + b];
        const int t = static_cast<int>(noise_rng.uniform_int(1, res.model.sched.T));
        const Mat eps = noise_rng.normal_matrix(data.latent_dim, 1);
        z0.col(b) = data.z0.col(idx);
        z_t.col(b) = forward_noise(res.model.sched, z0.col(b), t, eps);
        cond.col(b) = data.cond.col(idx);
        if (noise_rng.uniform() < cfg.drop_prob) cond.col(b).setZero();
        t_embed.col(b) = sinusoidal_embed(t, res.model.spec.time_dim);
        weights(b) = min_snr_weight(res.model.sched, t, cfg.snr_clip);
      }
      Graph g;
      BoundParams p(g, res.model.psi);
      try {
        Var zhat = denoiser_forward(res.model.spec, p, "psi", g.input(z_t),
                                    g.input(cond), g.input(t_embed));
        Var err = square(sub(g.input(z0), zhat));
        Var per_example = mul_row_broadcast(sum_rows(err), g.input(weights));
        Var loss = mean_all(per_example);
        g.backward(loss);
        adam_step(opt, res.model.psi, p.grads());
        epoch_loss += loss.value()(0, 0);
      } catch (const TrainingDivergence&) {
        res.model.psi = snapshot;
        res.diverged = true;
        return res;
      }
      ++batches;
    }
    epoch_loss /= std::max(1, batches);
    res.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
    if (!std::isfinite(epoch_loss) || !res.model.psi.all_finite()) {
      res.model.psi = snapshot;
      res.diverged = true;
      return res;
    }
    snapshot = res.model.psi;
  }
  return res;
}

Mat ddpm_sample_batch(const PriorModel& m, const Mat& conds, int n,
                      const GuidanceSpec& guidance, Rng& rng) {
  if (n < 1) throw std::invalid_argument("ddpm_sample: n >= 1");
  if (conds.rows() != m.spec.cond_dim)
    throw std::invalid_argument("ddpm_sample: conditioning width mismatch");
  if (guidance.w < 0.0 || guidance.extra_steps < 0)
    throw std::invalid_argument("ddpm_sample: invalid guidance spec");
  const int B = static_cast<int>(conds.cols());
  const int cols = B * n;
  const int d = m.spec.latent_dim;
  // condition j replicated over its n chains
  Mat cond_rep(m.spec.cond_dim, cols);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < n; ++i) cond_rep.col(j * n + i) = conds.col(j);

  const DiffusionSchedule& s = m.sched;
  Mat z = rng.normal_matrix(d, cols);  // z_T
  for (int t = s.T; t >= 1; --t) {
    const Mat zhat = guided_predict(m, z, cond_rep, t, guidance.w);
    const double ab_t = s.alpha_bar_at(t);
    const double ab_prev = s.alpha_bar_at(t - 1);
    const double beta_t = s.beta_at(t);
    const double c_zt = std::sqrt(s.alpha_at(t)) * (1.0 - ab_prev) / (1.0 - ab_t);
    const double c_zhat = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
    Mat mean = c_zt * z + c_zhat * zhat;
    if (t > 1)
      z = mean + std::sqrt(beta_t) * rng.normal_matrix(d, cols);
    else
      z = std::move(mean);
  }
  // extra denoise iterations at t=1; the t=1 posterior mean reduces to the
  // prediction itself, so each pass is one more application of the denoiser
  for (int i = 0; i < guidance.extra_steps; ++i)
    z = guided_predict(m, z, cond_rep, 1, guidance.w);
  return z;
}

std::vector<VectorXd> ddpm_sample(const PriorModel& m, const VectorXd& cond,
                                  const GuidanceSpec& guidance, int n, Rng& rng) {
  const Mat out = ddpm_sample_batch(m, cond, n, guidance, rng);
  std::vector<VectorXd> zs;
  zs.reserve(n);
  for (int i = 0; i < n; ++i) zs.push_back(out.col(i));
  return zs;
}

}  // namespace ldcq::diffusion
