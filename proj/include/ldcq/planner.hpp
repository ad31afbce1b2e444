#pragma once

#include "ldcq/policy.hpp"

namespace ldcq::plan {

using Eigen::VectorXd;
using nn::Mat;

// Deterministic temporally abstract dynamics s_{t+H} = f(s_t, z), trained by
// squared-error regression on skill transitions.
struct WorldModel {
  nn::MlpSpec spec;  // input: state + z, output: state
  nn::ParameterBundle eta;
  int state_dim = 0, z_dim = 0;

  Mat predict(const Mat& states, const Mat& latents) const;

  nn::Checkpoint to_checkpoint() const;
  static WorldModel from_checkpoint(const nn::Checkpoint& ckpt);
};

struct WorldModelTrainResult {
  WorldModel model;
  std::vector<double> epoch_loss;
  double validation_mse = 0.0;
  bool diverged = false;
};

struct WorldModelConfig {
  int hidden = 128;
  int epochs = 60;
  int batch_size = 128;
  double lr = 1e-3;
  double validation_fraction = 0.1;
};

WorldModelTrainResult train_world_model(const qlearn::PrioritizedBuffer& buffer,
                                        const WorldModelConfig& cfg, std::uint64_t seed,
                                        const std::function<void(int, double)>& on_epoch = {});

// || pos(s) - goal ||_2 over the leading goal-width coordinates of s
double euclidean_goal_cost(const VectorXd& s, const VectorXd& goal);

struct PlanSpec {
  int candidates = 6;  // latents sampled per expanded node
  int depth = 2;
  VectorXd goal;
  void validate() const;
};

struct PlanResult {
  VectorXd skill;        // level-1 latent ancestral to the best leaf
  double best_cost = 0.0;
  long model_calls = 0;  // world-model evaluations: sum_{k=1..d} n^k
  long nodes_expanded = 0;
};

// Expands `candidates` prior samples per node to `depth` levels through the
// world model, scores only the leaves, and returns the level-1 latent on the
// path to the cheapest leaf (ties toward the lowest index).
PlanResult plan(const WorldModel& wm, qlearn::CandidateSampler& sampler,
                const VectorXd& state, const PlanSpec& spec, Rng& rng);

// n (latent, predicted outcome) pairs for a single state.
std::vector<std::pair<VectorXd, VectorXd>> predict_outcomes(
    const WorldModel& wm, qlearn::CandidateSampler& sampler, const VectorXd& state,
    int n, Rng& rng);

// Skill selector that replans from the current state every H steps.
class PlannerSelector final : public exec::SkillSelector {
 public:
  PlannerSelector(const WorldModel& wm, qlearn::CandidateSampler& sampler, PlanSpec spec)
      : wm_(wm), sampler_(sampler), spec_(std::move(spec)) {}
  VectorXd select(const VectorXd& state, const VectorXd& goal, Rng& rng) override {
    ++selections;
    PlanSpec s = spec_;
    if (goal.size() > 0) s.goal = goal;
    return plan(wm_, sampler_, state, s, rng).skill;
  }

 private:
  const WorldModel& wm_;
  qlearn::CandidateSampler& sampler_;
  PlanSpec spec_;
};

}  // namespace ldcq::plan
