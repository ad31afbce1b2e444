#pragma once

#include <map>

#include "ldcq/diffusion.hpp"
#include "ldcq/replay.hpp"

namespace ldcq::qlearn {

using nn::Mat;

struct LdcqConfig {
  double gamma = 0.995;     // discount per env step
  double rho = 0.995;       // target mixing rate, applied as printed:
                            // target <- rho * online + (1 - rho) * target
  bool swap_mixing = false; // flips to the conventional slow-target mixing
  int batch_size = 128;
  int candidates = 16;      // latents sampled per TD target
  long iterations = 10000;
  double lr = 5e-4;
  int horizon = 10;
  int stride = 1;
  double per_alpha = 0.7;
  double per_eps = 1e-3;
  int q_hidden = 128;
  diffusion::GuidanceSpec guidance;

  void validate() const;
};

// Source of candidate latents for TD targets and policy scoring. The
// production source is the diffusion prior; the Gaussian VAE prior gives the
// batch-constrained baseline, and exact dataset support backs the tabular
// oracle tests.
class CandidateSampler {
 public:
  virtual ~CandidateSampler() = default;
  // conds: s_dim x B -> d_z x (B*n); candidates of condition j occupy
  // columns [j*n, (j+1)*n)
  virtual Mat sample(const Mat& conds, int n, Rng& rng) = 0;
  long calls = 0;
  long latents_produced = 0;
};

class DiffusionCandidateSampler final : public CandidateSampler {
 public:
  DiffusionCandidateSampler(const diffusion::PriorModel& prior,
                            diffusion::GuidanceSpec guidance)
      : prior_(prior), guidance_(guidance) {}
  Mat sample(const Mat& conds, int n, Rng& rng) override;

 private:
  const diffusion::PriorModel& prior_;
  diffusion::GuidanceSpec guidance_;
};

class GaussianPriorCandidateSampler final : public CandidateSampler {
 public:
  explicit GaussianPriorCandidateSampler(const vae::VaeModel& vae) : vae_(vae) {}
  Mat sample(const Mat& conds, int n, Rng& rng) override;

 private:
  const vae::VaeModel& vae_;
};

// Exact dataset-supported latents per state, keyed on quantized state
// coordinates. sample() cycles deterministically through the support set, so
// with n >= support size the candidate set is exactly the dataset actions.
class DatasetCandidateSampler final : public CandidateSampler {
 public:
  void add(const Eigen::VectorXd& state, const Eigen::VectorXd& z);
  Mat sample(const Mat& conds, int n, Rng& rng) override;
  int support_size(const Eigen::VectorXd& state) const;

 private:
  static std::string key_of(const Eigen::VectorXd& state);
  std::map<std::string, std::vector<Eigen::VectorXd>> support_;
};

// Q-network: 5-layer MLP on [s; z] with LayerNorm before each activation.
struct QNetSpec {
  int state_dim = 0;
  int z_dim = 0;
  nn::MlpSpec mlp;
  static QNetSpec make(int state_dim, int z_dim, int hidden);
};

Eigen::RowVectorXd q_values(const QNetSpec& spec, const nn::ParameterBundle& b,
                            const Mat& states, const Mat& latents);

using QEval = std::function<Eigen::RowVectorXd(const Mat& states, const Mat& latents)>;
QEval make_q_eval(const QNetSpec& spec, const nn::ParameterBundle& b);

// One skill transition per snippet; z is a single reparameterized posterior
// sample fixed at build time. Initial priorities are uniform.
PrioritizedBuffer build_skill_buffer(const data::Dataset& ds, const vae::VaeModel& m,
                                     int H, double gamma, int stride, Rng& rng);

// y_j = ret_j + [not terminal] * gamma^steps_valid * max_i min_k Qk(s', z_i)
Eigen::VectorXd td_target(const std::vector<const SkillTransition*>& batch,
                          const QEval& q1_target, const QEval& q2_target,
                          CandidateSampler& sampler, const LdcqConfig& cfg, Rng& rng);

struct QUpdateResult {
  double loss1 = 0.0, loss2 = 0.0;
  Eigen::VectorXd td_errors;  // |delta| per example, averaged over both nets
};

// Importance-weighted MSE step on both online networks.
QUpdateResult q_update(const QNetSpec& spec, nn::ParameterBundle& q1,
                       nn::ParameterBundle& q2, nn::OptState& opt1, nn::OptState& opt2,
                       const std::vector<const SkillTransition*>& batch,
                       const Eigen::VectorXd& y, const std::vector<double>& weights);

// target <- rho * online + (1 - rho) * target (swap flips the mixing)
void target_soft_update(const nn::ParameterBundle& online, nn::ParameterBundle& target,
                        double rho, bool swap_mixing = false);

struct QLearnResult {
  QNetSpec spec;
  nn::ParameterBundle q1, q2, q1_target, q2_target;
  std::vector<double> td_curve;  // mean TD loss, sampled periodically
  bool diverged = false;

  nn::Checkpoint to_checkpoint() const;
  static QLearnResult from_checkpoint(const nn::Checkpoint& ckpt);
};

QLearnResult ldcq_train(PrioritizedBuffer& buffer, CandidateSampler& sampler,
                        const LdcqConfig& cfg, int state_dim, int z_dim,
                        std::uint64_t seed,
                        const std::function<void(long, double)>& on_log = {});

}  // namespace ldcq::qlearn
