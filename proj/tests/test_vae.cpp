#include <doctest.h>

#include "ldcq/analysis.hpp"
#include "ldcq/vae.hpp"
#include "support.hpp"

using namespace ldcq;
using namespace ldcq::vae;
using Eigen::VectorXd;
using nn::Mat;

namespace {

VaeModel tiny_model(int state_dim, int action_dim, int horizon, int d_z,
                    std::uint64_t seed) {
  envs::EnvDescriptor env;
  env.name = "unit";
  env.state_dim = state_dim;
  env.action_dim = action_dim;
  env.action_low = VectorXd::Constant(action_dim, -1.0);
  env.action_high = VectorXd::Constant(action_dim, 1.0);
  env.horizon_limit = 50;
  VaeConfig cfg;
  cfg.latent_dim = d_z;
  cfg.hidden = 12;
  cfg.gru_layers = 2;
  Rng rng(seed);
  return VaeModel::create(env, horizon, cfg, rng);
}

data::SkillSnippet snippet_of(int state_dim, int action_dim, int H, std::uint64_t seed) {
  Rng rng(seed);
  data::SkillSnippet sn;
  for (int t = 0; t < H; ++t) {
    sn.states.push_back(rng.normal_vector(state_dim));
    sn.actions.push_back(rng.normal_vector(action_dim));
    sn.rewards.push_back(rng.normal());
  }
  sn.next_state = rng.normal_vector(state_dim);
  sn.steps_valid = H;
  return sn;
}

}  // namespace

TEST_CASE("encode_posterior: deterministic, positive std, rejects partial windows") {
  const auto m = tiny_model(3, 2, 4, 5, 1);
  const auto sn = snippet_of(3, 2, 4, 2);
  const auto h1 = encode_posterior(m, sn);
  const auto h2 = encode_posterior(m, sn);
  CHECK(h1.mean == h2.mean);
  CHECK(h1.std == h2.std);
  CHECK(h1.std.minCoeff() > 0.0);
  CHECK(h1.mean.size() == 5);

  auto partial = sn;
  partial.steps_valid = 2;
  CHECK_THROWS_AS(encode_posterior(m, partial), std::invalid_argument);
}

TEST_CASE("reparameterized sample with zero noise equals the mean") {
  const auto m = tiny_model(3, 2, 4, 5, 3);
  const auto sn = snippet_of(3, 2, 4, 4);
  const auto h = encode_posterior(m, sn);
  const VectorXd z = h.mean + h.std.cwiseProduct(VectorXd::Zero(5));
  CHECK(z == h.mean);
}

TEST_CASE("gaussian prior head: deterministic with positive std") {
  const auto m = tiny_model(3, 2, 4, 5, 5);
  Rng rng(9);
  const VectorXd s0 = rng.normal_vector(3);
  const auto p1 = gaussian_prior(m, s0);
  const auto p2 = gaussian_prior(m, s0);
  CHECK(p1.mean == p2.mean);
  CHECK(p1.std.minCoeff() > 0.0);
  CHECK_THROWS_AS(gaussian_prior(m, rng.normal_vector(4)), std::invalid_argument);
}

TEST_CASE("decode_action: autoregression over action elements") {
  const auto m = tiny_model(2, 3, 4, 4, 7);
  Rng rng(2);
  const VectorXd s = rng.normal_vector(2), z = rng.normal_vector(4);

  SUBCASE("1-d action space has an always-empty prefix") {
    const auto m1 = tiny_model(2, 1, 4, 4, 7);
    const auto head = decode_action(m1, s, z, VectorXd());
    CHECK(head.mean.size() == 1);
    CHECK_THROWS_AS(decode_action(m1, s, z, VectorXd::Zero(1)), std::invalid_argument);
  }

  SUBCASE("zero-noise decoding is deterministic") {
    const VectorXd a1 = decode_full_action(m, s, z, nullptr);
    const VectorXd a2 = decode_full_action(m, s, z, nullptr);
    CHECK(a1 == a2);
    CHECK(a1.size() == 3);
  }

  SUBCASE("prefix too long is rejected") {
    CHECK_THROWS_AS(decode_action(m, s, z, VectorXd::Zero(3)), std::invalid_argument);
  }

  SUBCASE("stored-action log-likelihood equals the sum of element densities") {
    const VectorXd a = rng.normal_vector(3);
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      const auto head = decode_action(m, s, z, a.head(k));
      total += gaussian_log_density(a(k), head.mean(0), head.std(0));
    }
    // oracle: direct density formula per element
    double oracle = 0.0;
    for (int k = 0; k < 3; ++k) {
      const auto head = decode_action(m, s, z, a.head(k));
      const double d = (a(k) - head.mean(0)) / head.std(0);
      oracle += -0.5 * std::log(2.0 * M_PI) - std::log(head.std(0)) - 0.5 * d * d;
    }
    CHECK(total == doctest::Approx(oracle).epsilon(1e-14));
  }
}

TEST_CASE("diag_gaussian_kl: closed form") {
  const VectorXd zero2 = VectorXd::Zero(2), one2 = VectorXd::Ones(2);
  SUBCASE("identical heads give zero") {
    Rng rng(5);
    const VectorXd mu = rng.normal_vector(4);
    const VectorXd sd = rng.normal_vector(4).cwiseAbs().array() + 0.1;
    CHECK(diag_gaussian_kl(mu, sd, mu, sd) == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("mean (1,0), std (1,1) vs standard normal gives 0.5") {
    VectorXd mu(2);
    mu << 1.0, 0.0;
    CHECK(diag_gaussian_kl(mu, one2, zero2, one2) ==
          doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("non-negative on random heads, zero only at coincidence") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
      const VectorXd m1 = rng.normal_vector(3), m2 = rng.normal_vector(3);
      const VectorXd s1 = rng.normal_vector(3).cwiseAbs().array() + 0.05;
      const VectorXd s2 = rng.normal_vector(3).cwiseAbs().array() + 0.05;
      const double kl = diag_gaussian_kl(m1, s1, m2, s2);
      CHECK(kl >= -1e-12);
      if ((m1 - m2).norm() > 1e-6) CHECK(kl > 0.0);
    }
  }
}

TEST_CASE("vae_loss: KL term vanishes when posterior equals prior") {
  // zero every head weight so both heads emit bias-only outputs, then give
  // them identical biases
  auto m = tiny_model(2, 1, 3, 4, 11);
  for (auto& [name, mat] : m.params.items())
    if (name.rfind("enc.mean", 0) == 0 || name.rfind("enc.std", 0) == 0 ||
        name.rfind("prior.mean", 0) == 0 || name.rfind("prior.std", 0) == 0)
      if (name.find(".W") != std::string::npos) mat.setZero();
  m.params.at("enc.mean.b1").setConstant(0.3);
  m.params.at("prior.mean.b0").setConstant(0.3);
  m.params.at("enc.std.b1").setConstant(0.2);
  m.params.at("prior.std.b0").setConstant(0.2);

  const auto sn = snippet_of(2, 1, 3, 8);
  nn::Graph g;
  nn::BoundParams p(g, m.params);
  const auto parts = vae_loss(m, g, p, {&sn}, Mat::Zero(4, 1));
  CHECK(parts.kl == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("vae_loss: vanishing beta reduces to pure reconstruction NLL") {
  auto m = tiny_model(2, 2, 3, 4, 13);
  m.cfg.beta = 1e-300;  // beta must stay positive; this is numerically zero
  const auto sn = snippet_of(2, 2, 3, 9);
  nn::Graph g;
  nn::BoundParams p(g, m.params);
  Rng rng(1);
  const auto parts = vae_loss(m, g, p, {&sn}, rng.normal_matrix(4, 1));
  CHECK(parts.loss.value()(0, 0) == doctest::Approx(parts.recon_nll).epsilon(1e-9));
}

TEST_CASE("vae_loss: reconstruction term matches a teacher-forced density oracle") {
  auto m = tiny_model(2, 2, 3, 4, 17);
  const auto sn = snippet_of(2, 2, 3, 10);
  nn::Graph g;
  nn::BoundParams p(g, m.params);
  const auto parts = vae_loss(m, g, p, {&sn}, Mat::Zero(4, 1));

  // oracle: decode with z = posterior mean (zero noise), sum per-element
  // Gaussian log densities with teacher-forced prefixes
  const auto head = encode_posterior(m, sn);
  double nll = 0.0;
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 2; ++k) {
      const auto eh = decode_action(m, sn.states[t], head.mean, sn.actions[t].head(k));
      nll -= gaussian_log_density(sn.actions[t](k), eh.mean(0), eh.std(0));
    }
  CHECK(parts.recon_nll == doctest::Approx(nll).epsilon(1e-10));
}

TEST_CASE("vae_loss gradients match finite differences") {
  auto m = tiny_model(2, 2, 2, 3, 19);
  const auto sn1 = snippet_of(2, 2, 2, 21);
  const auto sn2 = snippet_of(2, 2, 2, 22);
  Rng rng(4);
  const Mat eps = rng.normal_matrix(3, 2);
  auto loss_fn = [&](const nn::ParameterBundle& params) {
    VaeModel probe = m;
    probe.params = params;
    nn::Graph g;
    nn::BoundParams p(g, probe.params);
    return vae_loss(probe, g, p, {&sn1, &sn2}, eps).loss.value()(0, 0);
  };
  nn::Graph g;
  nn::BoundParams p(g, m.params);
  const auto parts = vae_loss(m, g, p, {&sn1, &sn2}, eps);
  g.backward(parts.loss);
  CHECK(testsupport::fd_max_rel_error(loss_fn, m.params, p.grads(), 1e-6) < 1e-4);
}

TEST_CASE("train_vae: loss decreases on rw1d data") {
  auto env = envs::make_env("rw1d");
  const auto ds = data::collect_dataset(*env, 6, 33);
  VaeConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = 16;
  cfg.epochs = 10;
  cfg.batch_size = 64;
  cfg.lr = 1e-3;
  const auto res = train_vae(ds, 1, cfg, 77);
  REQUIRE_FALSE(res.diverged);
  REQUIRE(res.epoch_loss.size() == 10);
  const double early = (res.epoch_loss[0] + res.epoch_loss[1] + res.epoch_loss[2]) / 3;
  const double late = (res.epoch_loss[7] + res.epoch_loss[8] + res.epoch_loss[9]) / 3;
  CHECK(late < early);
}

TEST_CASE("checkpoint round-trip preserves the model exactly") {
  const auto m = tiny_model(3, 2, 4, 5, 23);
  const auto ckpt = m.to_checkpoint();
  const auto m2 = VaeModel::from_checkpoint(ckpt);
  const auto sn = snippet_of(3, 2, 4, 24);
  const auto h1 = encode_posterior(m, sn);
  const auto h2 = encode_posterior(m2, sn);
  CHECK(h1.mean == h2.mean);
  CHECK(h1.std == h2.std);
}

TEST_CASE("make_latent_dataset: one sample per full snippet, goal variant widens cond") {
  auto env = envs::make_env("gridmaze");
  const auto ds = data::collect_dataset(*env, 6, 41);
  const auto snippets = data::slice_snippets(ds, 4, 2);
  VaeConfig cfg;
  cfg.latent_dim = 3;
  cfg.hidden = 8;
  Rng mrng(5);
  const auto m = VaeModel::create(ds.env, 4, cfg, mrng);

  std::size_t full = 0;
  for (const auto& sn : snippets)
    if (sn.full(4)) ++full;

  Rng r1(9);
  const auto plain = make_latent_dataset(ds, snippets, m, false, r1);
  CHECK(plain.cond_dim == 2);
  CHECK(plain.z0.cols() == static_cast<Eigen::Index>(full));
  Rng r2(9);
  const auto goal = make_latent_dataset(ds, snippets, m, true, r2);
  CHECK(goal.cond_dim == 4);
  CHECK(goal.cond.rows() == 4);
  // same rng stream, same posterior draws
  CHECK(plain.z0 == goal.z0);
}

TEST_SUITE("slow") {
  TEST_CASE("trimodal latents separate with horizon (mode emergence)") {
    auto env = envs::make_env("trimodal");
    const auto ds = data::collect_dataset(*env, 120, 3);
    VaeConfig cfg;
    cfg.latent_dim = 6;
    cfg.hidden = 32;
    cfg.epochs = 18;
    cfg.batch_size = 64;
    cfg.lr = 1e-3;

    auto silhouette_at = [&](int H) {
      const auto res = train_vae(ds, H, cfg, 11);
      REQUIRE_FALSE(res.diverged);
      const auto snippets = data::slice_snippets(ds, H, 1);
      std::vector<const data::SkillSnippet*> start_windows;
      for (const auto& sn : snippets)
        if (sn.full(H) && sn.start == 0) start_windows.push_back(&sn);
      const auto heads = encode_posterior_batch(res.model, start_windows);
      Rng krng(7);
      const auto km = analysis::kmeans(heads.mean, 3, krng);
      return analysis::silhouette(heads.mean, km.labels);
    };

    const double s1 = silhouette_at(1);
    const double s5 = silhouette_at(5);
    const double s20 = silhouette_at(20);
    CAPTURE(s1);
    CAPTURE(s5);
    CAPTURE(s20);
    // mode emergence: clusters sharpen as the horizon grows
    CHECK(s20 > 0.4);
    CHECK(s20 >= s5 - 0.05);
    CHECK(s5 >= s1 - 0.05);
    CHECK(s20 > s1);
  }

  TEST_CASE("decoder is mode-faithful for distinct cluster-center latents") {
    auto env = envs::make_env("trimodal");
    const auto ds = data::collect_dataset(*env, 120, 3);
    VaeConfig cfg;
    cfg.latent_dim = 6;
    cfg.hidden = 32;
    cfg.epochs = 18;
    cfg.batch_size = 64;
    cfg.lr = 1e-3;
    const int H = 20;
    const auto res = train_vae(ds, H, cfg, 11);
    const auto snippets = data::slice_snippets(ds, H, 1);
    std::vector<const data::SkillSnippet*> start_windows;
    for (const auto& sn : snippets)
      if (sn.full(H) && sn.start == 0) start_windows.push_back(&sn);
    const auto heads = encode_posterior_batch(res.model, start_windows);
    Rng krng(7);
    const auto km = analysis::kmeans(heads.mean, 3, krng);

    auto roll_site = [&](const VectorXd& z) {
      envs::TrimodalPoint sim;
      Rng ep(1);
      sim.reset(ep);
      for (int t = 0; t < H; ++t) {
        VectorXd a = decode_full_action(res.model, sim.state(), z, nullptr);
        for (int i = 0; i < 2; ++i)
          a(i) = std::clamp(a(i), -envs::TrimodalPoint::kMaxSpeed,
                            envs::TrimodalPoint::kMaxSpeed);
        if (sim.step(a).done) break;
      }
      int nearest = 0;
      double best = 1e300;
      for (int k = 0; k < 3; ++k) {
        const double d = (sim.state() - sim.sites()[k]).norm();
        if (d < best) {
          best = d;
          nearest = k;
        }
      }
      return nearest;
    };

    int distinct = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b)
        if (roll_site(km.centers.col(a)) != roll_site(km.centers.col(b))) ++distinct;
    CHECK(distinct >= 2);  // at least 2 of the 3 center pairs reach different sites
  }
}
