#include <doctest.h>

#include "ldcq/diffusion.hpp"
#include "ldcq/errors.hpp"
#include "support.hpp"

using namespace ldcq;
using namespace ldcq::diffusion;
using Eigen::VectorXd;
using nn::Mat;

namespace {

PriorModel tiny_prior(int latent_dim, int cond_dim, int T, std::uint64_t seed) {
  nn::DenoiserSpec base;
  base.time_dim = 8;
  base.enc_hidden = 8;
  base.blocks = {12, 6, 12};
  PriorTrainConfig cfg;
  cfg.T = T;
  Rng rng(seed);
  return PriorModel::create(latent_dim, cond_dim, base, cfg, rng);
}

// samples from an equal-weight two-component Gaussian mixture at +-mu
Mat mixture_samples(int n, double mu, double sigma, Rng& rng) {
  Mat out(1, n);
  for (int i = 0; i < n; ++i)
    out(0, i) = (rng.uniform() < 0.5 ? -mu : mu) + sigma * rng.normal();
  return out;
}

PriorModel train_mixture_prior(int T, int epochs, std::uint64_t seed) {
  Rng data_rng(900 + seed);
  const int N = 2000;
  vae::LatentDataset latents;
  latents.latent_dim = 1;
  latents.cond_dim = 1;
  latents.z0 = mixture_samples(N, 2.0, 0.1, data_rng);
  latents.cond = Mat::Zero(1, N);
  nn::DenoiserSpec base;
  base.time_dim = 16;
  base.enc_hidden = 16;
  base.blocks = {24, 12, 24};
  PriorTrainConfig cfg;
  cfg.T = T;
  cfg.epochs = epochs;
  cfg.lr = 2e-3;
  cfg.batch_size = 128;
  const auto res = train_prior(latents, base, cfg, false, seed);
  REQUIRE_FALSE(res.diverged);
  return res.model;
}

double mixture_mode_score(const PriorModel& prior, int n_samples, std::uint64_t seed,
                          double* plus_share = nullptr) {
  GuidanceSpec g;
  g.w = 0.0;  // unconditional sampling
  g.extra_steps = 10;
  Rng rng(seed);
  const Mat out = ddpm_sample_batch(prior, Mat::Zero(1, 1), n_samples, g, rng);
  int near = 0, plus = 0;
  for (int i = 0; i < n_samples; ++i) {
    const double v = out(0, i);
    if (std::abs(std::abs(v) - 2.0) <= 0.3) ++near;  // 3 sigma = 0.3
    if (v > 0) ++plus;
  }
  if (plus_share) *plus_share = plus / double(n_samples);
  return near / double(n_samples);
}

}  // namespace

TEST_CASE("make_schedule: bounds, monotonicity, cumulative-product oracle") {
  CHECK_THROWS_AS(DiffusionSchedule::linear(0, 1e-4, 0.02), ConfigError);
  CHECK_THROWS_AS(DiffusionSchedule::linear(10, 0.0, 0.02), ConfigError);
  CHECK_THROWS_AS(DiffusionSchedule::linear(10, 0.03, 0.02), ConfigError);
  CHECK_THROWS_AS(DiffusionSchedule::linear(10, 1e-4, 1.0), ConfigError);

  SUBCASE("T=1: alpha_bar_1 = 1 - beta_1") {
    const auto s = DiffusionSchedule::linear(1, 0.01, 0.01);
    CHECK(s.alpha_bar_at(1) == doctest::Approx(0.99).epsilon(1e-15));
  }
  SUBCASE("alpha_bar decreases strictly") {
    const auto s = DiffusionSchedule::linear(50, 1e-4, 0.05);
    for (int t = 2; t <= 50; ++t) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    CHECK(s.alpha_bar_at(50) < s.alpha_bar_at(1));
  }
  SUBCASE("T=500 standard range matches a plain loop") {
    const auto s = DiffusionSchedule::linear(500, 1e-4, 0.02);
    double prod = 1.0;
    for (int t = 1; t <= 500; ++t) {
      const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 499.0;
      prod *= 1.0 - beta;
      CHECK(s.alpha_bar_at(t) == doctest::Approx(prod).epsilon(1e-12));
      CHECK(s.beta_at(t) == doctest::Approx(beta).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward_noise: zero-noise and signal-destroyed limits") {
  const auto s = DiffusionSchedule::linear(500, 1e-4, 0.02);
  Rng rng(3);
  const Mat z0 = rng.normal_matrix(4, 2);
  SUBCASE("eps = 0 gives sqrt(alpha_bar) z0") {
    const Mat zt = forward_noise(s, z0, 100, Mat::Zero(4, 2));
    CHECK((zt - std::sqrt(s.alpha_bar_at(100)) * z0).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("at t=T the signal is destroyed") {
    const Mat eps = rng.normal_matrix(4, 2);
    const Mat zt = forward_noise(s, z0, 500, eps);
    // sqrt(alpha_bar_T) is ~6e-3 for this schedule
    CHECK((zt - eps).cwiseAbs().maxCoeff() <
          2.0 * std::sqrt(s.alpha_bar_at(500)) * z0.cwiseAbs().maxCoeff() + 1e-6);
  }
  SUBCASE("t out of range rejected") {
    CHECK_THROWS_AS(forward_noise(s, z0, 0, Mat::Zero(4, 2)), std::invalid_argument);
    CHECK_THROWS_AS(forward_noise(s, z0, 501, Mat::Zero(4, 2)), std::invalid_argument);
    CHECK_THROWS_AS(forward_noise(s, z0, 5, Mat::Zero(3, 2)), std::invalid_argument);
  }
}

TEST_CASE("forward_noise: Monte-Carlo moments match the closed form") {
  const auto s = DiffusionSchedule::linear(200, 1e-4, 0.02);
  const int t = 120, n = 100000;
  const double z0 = 1.7;
  Rng rng(11);
  double sum = 0.0, sum2 = 0.0;
  const Mat z0m = Mat::Constant(1, 1, z0);
  for (int i = 0; i < n; ++i) {
    const double v = forward_noise(s, z0m, t, rng.normal_matrix(1, 1))(0, 0);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double ab = s.alpha_bar_at(t);
  // 3 standard errors
  const double se_mean = std::sqrt((1.0 - ab) / n);
  const double se_var = (1.0 - ab) * std::sqrt(2.0 / n);
  CHECK(std::abs(mean - std::sqrt(ab) * z0) < 3.0 * se_mean);
  CHECK(std::abs(var - (1.0 - ab)) < 3.0 * se_var);
}

TEST_CASE("iterating the stepwise kernel matches the closed form in distribution") {
  const auto s = DiffusionSchedule::linear(30, 1e-3, 0.08);
  const int t = 30, n = 100000;
  const double z0 = -1.1;
  Rng rng(13);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Mat z = Mat::Constant(1, 1, z0);
    for (int k = 1; k <= t; ++k) z = forward_noise_step(s, z, k, rng.normal_matrix(1, 1));
    sum += z(0, 0);
    sum2 += z(0, 0) * z(0, 0);
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double ab = s.alpha_bar_at(t);
  CHECK(std::abs(mean - std::sqrt(ab) * z0) < 3.0 * std::sqrt((1.0 - ab) / n));
  CHECK(std::abs(var - (1.0 - ab)) < 3.0 * (1.0 - ab) * std::sqrt(2.0 / n));
}

TEST_CASE("min_snr_weight") {
  const auto s = DiffusionSchedule::linear(500, 1e-4, 0.02);
  SUBCASE("early steps clip to gamma") {
    // SNR(1) = alpha_bar_1/(1-alpha_bar_1) = 0.9999/0.0001, far above 5
    CHECK(min_snr_weight(s, 1, 5.0) == 5.0);
  }
  SUBCASE("late steps fall below the clip and pass through") {
    const double ab = s.alpha_bar_at(500);
    const double snr = ab / (1.0 - ab);
    REQUIRE(snr < 1.0);
    CHECK(min_snr_weight(s, 500, 5.0) == doctest::Approx(snr).epsilon(1e-14));
  }
  SUBCASE("infinite clip recovers the raw SNR") {
    for (int t : {1, 100, 350, 500}) {
      const double ab = s.alpha_bar_at(t);
      CHECK(min_snr_weight(s, t, std::numeric_limits<double>::infinity()) ==
            doctest::Approx(ab / (1.0 - ab)).epsilon(1e-14));
    }
  }
}

TEST_CASE("denoise_predict: deterministic; NULL cond equals the zero token") {
  const auto m = tiny_prior(3, 2, 20, 5);
  Rng rng(7);
  const Mat z = rng.normal_matrix(3, 4);
  const Mat zeros = Mat::Zero(2, 4);
  const Mat a = denoise_predict(m, z, nullptr, 5);
  const Mat b = denoise_predict(m, z, nullptr, 5);
  const Mat c = denoise_predict(m, z, &zeros, 5);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("guided_predict: w=0 and w=1 identities, interpolation formula") {
  const auto m = tiny_prior(3, 2, 20, 9);
  Rng rng(8);
  const Mat z = rng.normal_matrix(3, 4);
  const Mat cond = rng.normal_matrix(2, 4);
  const Mat uncond = denoise_predict(m, z, nullptr, 7);
  const Mat conded = denoise_predict(m, z, &cond, 7);
  CHECK(guided_predict(m, z, cond, 7, 0.0) == uncond);
  CHECK(guided_predict(m, z, cond, 7, 1.0) == conded);
  const Mat mid = guided_predict(m, z, cond, 7, 1.5);
  CHECK((mid - (uncond + 1.5 * (conded - uncond))).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("diffusion_loss: perfect predictor and degenerate clip give zero") {
  const auto s = DiffusionSchedule::linear(20, 1e-3, 0.05);
  PriorTrainConfig cfg;
  cfg.T = 20;
  Rng rng(5);
  const Mat z0 = rng.normal_matrix(3, 8);
  const Mat cond = rng.normal_matrix(2, 8);

  SUBCASE("injected identity predictor") {
    // the predictor that always answers the true z0 has zero loss
    int col = 0;
    auto perfect = [&](const Mat&, const Mat&, int) { return Mat(z0.col(col++)); };
    Rng lr(1);
    CHECK(diffusion_loss_impl(perfect, cond, z0, s, cfg, lr) == 0.0);
  }
  SUBCASE("zero clip weight") {
    PriorTrainConfig zero = cfg;
    zero.snr_clip = 0.0;
    auto anything = [&](const Mat& zt, const Mat&, int) { return Mat(zt); };
    Rng lr(2);
    CHECK(diffusion_loss_impl(anything, cond, z0, s, zero, lr) == 0.0);
  }
}

TEST_CASE("diffusion_loss: fixed (t, eps, weight) matches hand arithmetic") {
  // single example, T=1 forces t=1; drop_prob=0 keeps the condition
  const auto s = DiffusionSchedule::linear(1, 0.04, 0.04);
  PriorTrainConfig cfg;
  cfg.T = 1;
  cfg.drop_prob = 0.0;
  cfg.snr_clip = 5.0;
  Mat z0 = Mat::Constant(2, 1, 1.0);
  Mat cond = Mat::Zero(1, 1);
  // predictor answers a constant 0.25
  auto predict = [&](const Mat&, const Mat&, int) { return Mat(Mat::Constant(2, 1, 0.25)); };
  Rng rng(3);
  const double loss = diffusion_loss_impl(predict, cond, z0, s, cfg, rng);
  // weight = min(0.96/0.04, 5) = 5; error = 2 * 0.75^2
  CHECK(loss == doctest::Approx(5.0 * 2.0 * 0.75 * 0.75).epsilon(1e-12));
  CHECK(weighted_denoise_error(VectorXd::Ones(2), VectorXd::Constant(2, 0.25), 5.0) ==
        doctest::Approx(5.0 * 2.0 * 0.5625).epsilon(1e-12));
}

TEST_CASE("ddpm_sample: t=1 step adds no noise and extra steps are denoiser passes") {
  const auto m = tiny_prior(3, 2, 1, 21);  // single-step schedule
  GuidanceSpec g;
  g.w = 1.0;
  g.extra_steps = 0;
  Rng rng(5);
  const std::uint64_t before = rng.normal_draws();
  ddpm_sample_batch(m, Mat::Zero(2, 1), 2, g, rng);
  // only the z_T draw consumes noise: d * n = 3 * 2 normals
  CHECK(rng.normal_draws() - before == 6);

  GuidanceSpec gx = g;
  gx.extra_steps = 4;
  Rng rng2(5);
  ddpm_sample_batch(m, Mat::Zero(2, 1), 2, gx, rng2);
  CHECK(rng2.normal_draws() == 6);  // extra steps never draw noise
}

TEST_CASE("ddpm_sample: reproducible per seed, batched layout") {
  const auto m = tiny_prior(2, 3, 15, 22);
  GuidanceSpec g;
  g.w = 1.5;
  g.extra_steps = 3;
  Rng r1(77), r2(77);
  Rng cr(3);
  const Mat conds = cr.normal_matrix(3, 4);
  const Mat a = ddpm_sample_batch(m, conds, 5, g, r1);
  const Mat b = ddpm_sample_batch(m, conds, 5, g, r2);
  CHECK(a == b);  // bitwise
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 20);
  const auto singles = ddpm_sample(m, conds.col(0), g, 5, r1);
  CHECK(singles.size() == 5);
}

TEST_CASE("ddpm_sample validates inputs") {
  const auto m = tiny_prior(2, 3, 15, 23);
  GuidanceSpec g;
  Rng rng(1);
  CHECK_THROWS_AS(ddpm_sample_batch(m, Mat::Zero(3, 1), 0, g, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(ddpm_sample_batch(m, Mat::Zero(2, 1), 4, g, rng),
                  std::invalid_argument);
  GuidanceSpec bad;
  bad.w = -0.5;
  CHECK_THROWS_AS(ddpm_sample_batch(m, Mat::Zero(3, 1), 1, bad, rng),
                  std::invalid_argument);
}

TEST_CASE("denoiser gradient through the training loss matches finite differences") {
  auto m = tiny_prior(2, 2, 10, 25);
  Rng rng(6);
  const Mat z_t = rng.normal_matrix(2, 3);
  const Mat cond = rng.normal_matrix(2, 3);
  Mat temb(8, 3);
  for (int i = 0; i < 3; ++i) temb.col(i) = nn::sinusoidal_embed(i + 1, 8);
  const Mat target = rng.normal_matrix(2, 3);
  auto loss_fn = [&](const nn::ParameterBundle& params) {
    return (denoiser_forward_raw(m.spec, params, "psi", z_t, cond, temb) - target)
        .squaredNorm();
  };
  nn::Graph g;
  nn::BoundParams p(g, m.psi);
  nn::Var out =
      nn::denoiser_forward(m.spec, p, "psi", g.input(z_t), g.input(cond), g.input(temb));
  g.backward(nn::sum_all(nn::square(nn::sub(out, g.input(target)))));
  CHECK(testsupport::fd_max_rel_error(loss_fn, m.psi, p.grads()) < 1e-4);
}

TEST_SUITE("slow") {
  TEST_CASE("mixture benchmark: training converges and sampling recovers both modes") {
    const auto prior = train_mixture_prior(50, 40, 31);

    double plus_share = 0.0;
    const double near = mixture_mode_score(prior, 4000, 55, &plus_share);
    CAPTURE(near);
    CAPTURE(plus_share);
    CHECK(near >= 0.98);
    CHECK(std::abs(plus_share - 0.5) <= 0.05);
  }

  TEST_CASE("mixture benchmark: more diffusion steps do not degrade coverage") {
    const auto small_T = train_mixture_prior(10, 40, 33);
    const auto large_T = train_mixture_prior(200, 40, 33);
    const double score_small = mixture_mode_score(small_T, 2000, 71);
    const double score_large = mixture_mode_score(large_T, 2000, 71);
    CAPTURE(score_small);
    CAPTURE(score_large);
    CHECK(score_large >= score_small - 0.02);
  }

  TEST_CASE("train_prior: loss trend decreases") {
    Rng data_rng(41);
    vae::LatentDataset latents;
    latents.latent_dim = 2;
    latents.cond_dim = 1;
    const int N = 800;
    latents.z0 = mixture_samples(N, 1.5, 0.2, data_rng).replicate(2, 1);
    latents.cond = Mat::Zero(1, N);
    nn::DenoiserSpec base;
    base.time_dim = 8;
    base.enc_hidden = 8;
    base.blocks = {16, 8, 16};
    PriorTrainConfig cfg;
    cfg.T = 20;
    cfg.epochs = 12;
    cfg.lr = 1e-3;
    cfg.batch_size = 128;
    const auto res = train_prior(latents, base, cfg, false, 91);
    REQUIRE_FALSE(res.diverged);
    const double early = (res.epoch_loss[0] + res.epoch_loss[1]) / 2;
    const double late =
        (res.epoch_loss[cfg.epochs - 2] + res.epoch_loss[cfg.epochs - 1]) / 2;
    CHECK(late < early);
  }
}
