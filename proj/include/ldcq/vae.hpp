#pragma once

#include <functional>

#include "ldcq/checkpoint.hpp"
#include "ldcq/dataset.hpp"
#include "ldcq/nets.hpp"

namespace ldcq::vae {

using nn::Mat;
using Eigen::VectorXd;

// Diagonal Gaussian produced by a mean head and a SoftPlus std head.
struct GaussianHead {
  VectorXd mean, std;
};

struct GaussianHeadBatch {
  Mat mean, std;  // d x B
};

struct VaeConfig {
  int latent_dim = 16;
  double beta = 0.05;
  double lr = 5e-5;
  int batch_size = 128;
  int epochs = 100;
  int hidden = 256;
  int gru_layers = 2;
};

// Trajectory beta-VAE: bidirectional recurrent encoder over per-step
// (state, action) pairs, a state-conditioned Gaussian prior, and an
// autoregressive per-element action decoder. One bundle holds all three
// parameter groups under the prefixes enc./dec./prior.
struct VaeModel {
  VaeConfig cfg;
  envs::EnvDescriptor env;
  int horizon = 1;
  nn::BiGruSpec enc_gru;
  nn::MlpSpec enc_mean, enc_std;
  nn::MlpSpec prior_body, prior_mean, prior_std;
  nn::ParameterBundle params;

  static VaeModel create(const envs::EnvDescriptor& env, int horizon,
                         const VaeConfig& cfg, Rng& rng);

  // specs of the per-element decoder nets (input: state + z + k prefix dims)
  nn::MlpSpec dec_body_spec(int element) const;
  nn::MlpSpec dec_head_spec(bool std_head) const;

  nlohmann::json meta() const;
  static VaeModel from_checkpoint(const nn::Checkpoint& ckpt);
  nn::Checkpoint to_checkpoint() const;
};

// q_phi(z | tau_H) for one full snippet; rejects partial windows.
GaussianHead encode_posterior(const VaeModel& m, const data::SkillSnippet& sn);
// Batched encoder without the full-window check (padded snippets allowed);
// used by buffer building and analysis.
GaussianHeadBatch encode_posterior_batch(const VaeModel& m,
                                         const std::vector<const data::SkillSnippet*>& sns);

// p_omega(z | s0)
GaussianHead gaussian_prior(const VaeModel& m, const VectorXd& s0);
GaussianHeadBatch gaussian_prior_batch(const VaeModel& m, const Mat& s0);

// Distribution over action element k = prefix.size() given (s, z, prefix).
GaussianHead decode_action(const VaeModel& m, const VectorXd& s, const VectorXd& z,
                           const VectorXd& prefix);
// Assembles a full action element-by-element; zero noise when rng is null.
VectorXd decode_full_action(const VaeModel& m, const VectorXd& s, const VectorXd& z,
                            Rng* rng);

double gaussian_log_density(double x, double mean, double std);

// closed-form KL between diagonal Gaussians
double diag_gaussian_kl(const VectorXd& mean_q, const VectorXd& std_q,
                        const VectorXd& mean_p, const VectorXd& std_p);

struct VaeLossParts {
  nn::Var loss;       // scalar: mean over batch of (recon NLL + beta * KL)
  double recon_nll;   // batch means, for curves
  double kl;
};

// Builds the negative-ELBO graph for a batch of full snippets. `eps` is the
// reparameterization noise (latent_dim x B); pass zeros for deterministic
// checks.
VaeLossParts vae_loss(const VaeModel& m, nn::Graph& g, const nn::BoundParams& p,
                      const std::vector<const data::SkillSnippet*>& batch,
                      const Mat& eps);

struct VaeTrainResult {
  VaeModel model;
  std::vector<double> epoch_loss;
  bool diverged = false;
};

VaeTrainResult train_vae(const data::Dataset& ds, int horizon, const VaeConfig& cfg,
                         std::uint64_t seed,
                         const std::function<void(int, double)>& on_epoch = {});

// Conditioning/latent pairs for prior training: one reparameterized
// posterior sample per full snippet. With goal conditioning the snippet's
// hindsight goal (the position of a state at least H steps ahead in the same
// episode) is appended to s0.
struct LatentDataset {
  Mat cond;  // cond_dim x N
  Mat z0;    // latent_dim x N
  int cond_dim = 0;
  int latent_dim = 0;
};

LatentDataset make_latent_dataset(const data::Dataset& ds,
                                  const std::vector<data::SkillSnippet>& snippets,
                                  const VaeModel& m, bool goal_conditioned, Rng& rng);

}  // namespace ldcq::vae
