#pragma once

#include <functional>

#include "ldcq/checkpoint.hpp"
#include "ldcq/nets.hpp"
#include "ldcq/vae.hpp"

namespace ldcq::diffusion {

using nn::Mat;
using Eigen::VectorXd;

// beta_t, alpha_t = 1 - beta_t and the cached cumulative products
// alpha_bar_t for t = 1..T. alpha_bar is strictly decreasing.
struct DiffusionSchedule {
  int T = 0;
  VectorXd beta, alpha, alpha_bar;

  static DiffusionSchedule linear(int T, double beta_min, double beta_max);

  double beta_at(int t) const { return beta(t - 1); }
  double alpha_at(int t) const { return alpha(t - 1); }
  // alpha_bar_0 == 1 by convention (used by the t=1 posterior step)
  double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar(t - 1); }
  void check_t(int t) const;

  nlohmann::json to_json() const;
  static DiffusionSchedule from_json(const nlohmann::json& j);
};

struct GuidanceSpec {
  double w = 1.5;
  int extra_steps = 10;  // additional denoise iterations at t=1
};

struct PriorTrainConfig {
  double lr = 1e-4;
  int batch_size = 32;
  int epochs = 300;
  int T = 200;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double drop_prob = 0.1;   // conditioning dropped to the null token
  double snr_clip = 5.0;    // gamma of the Min-SNR weighting
};

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps
Mat forward_noise(const DiffusionSchedule& s, const Mat& z0, int t, const Mat& eps);
// one step of the stepwise noising kernel q(z_t | z_{t-1})
Mat forward_noise_step(const DiffusionSchedule& s, const Mat& z_prev, int t,
                       const Mat& eps);

// min(SNR(t), clip) with SNR(t) = alpha_bar_t / (1 - alpha_bar_t)
double min_snr_weight(const DiffusionSchedule& s, int t, double clip);

// z0-prediction denoiser plus its training schedule.
struct PriorModel {
  nn::DenoiserSpec spec;
  nn::ParameterBundle psi;
  DiffusionSchedule sched;
  PriorTrainConfig cfg;
  bool goal_conditioned = false;

  static PriorModel create(int latent_dim, int cond_dim, const nn::DenoiserSpec& base,
                           const PriorTrainConfig& cfg, Rng& rng);
  nn::Checkpoint to_checkpoint() const;
  static PriorModel from_checkpoint(const nn::Checkpoint& ckpt);
};

// cond may be null: the null token is a zero vector of cond_dim.
Mat denoise_predict(const PriorModel& m, const Mat& z_t, const Mat* cond, int t);
// uncond + w * (cond - uncond); w=0 and w=1 short-circuit to the pure branch
Mat guided_predict(const PriorModel& m, const Mat& z_t, const Mat& cond, int t,
                   double w);

// Injectable loss core: one example with everything fixed.
double weighted_denoise_error(const VectorXd& z0, const VectorXd& zhat, double weight);

struct DiffusionLossSample {
  int t = 0;
  Mat z_t;       // latent_dim x B
  Mat cond;      // cond_dim x B (zeroed columns where dropped)
  double weight = 0.0;
};

// Per-example t ~ U[1, T], eps ~ N(0, I), conditioning dropped with
// drop_prob; returns the Min-SNR weighted mean squared z0 error. The
// prediction function is injectable so tests can pin it.
using PredictFn = std::function<Mat(const Mat& z_t, const Mat& cond, int t)>;
double diffusion_loss_impl(const PredictFn& predict, const Mat& cond, const Mat& z0,
                           const DiffusionSchedule& s, const PriorTrainConfig& cfg,
                           Rng& rng);
double diffusion_loss(const PriorModel& m, const Mat& cond, const Mat& z0, Rng& rng);

struct PriorTrainResult {
  PriorModel model;
  std::vector<double> epoch_loss;
  bool diverged = false;
};

PriorTrainResult train_prior(const vae::LatentDataset& data, const nn::DenoiserSpec& base,
                             const PriorTrainConfig& cfg, bool goal_conditioned,
                             std::uint64_t seed,
                             const std::function<void(int, double)>& on_epoch = {});

// DDPM ancestral sampling with classifier-free guidance and extra denoise
// steps at t=1. conds is cond_dim x B; each condition produces n chains and
// the result is latent_dim x (B*n), chains of condition j in columns
// [j*n, (j+1)*n).
Mat ddpm_sample_batch(const PriorModel& m, const Mat& conds, int n,
                      const GuidanceSpec& guidance, Rng& rng);
std::vector<VectorXd> ddpm_sample(const PriorModel& m, const VectorXd& cond,
                                  const GuidanceSpec& guidance, int n, Rng& rng);

}  // namespace ldcq::diffusion
