#pragma once

#include "ldcq/qlearning.hpp"

namespace ldcq::exec {

using Eigen::VectorXd;
using nn::Mat;

// Picks the skill to execute for the next H steps. goal is empty for
// goal-free modes.
class SkillSelector {
 public:
  virtual ~SkillSelector() = default;
  virtual VectorXd select(const VectorXd& state, const VectorXd& goal, Rng& rng) = 0;
  long selections = 0;
};

// LDCQ-style: n candidates from the prior, argmax of the learnt Q. Ties
// break toward the lowest candidate index. use_min scores with the clipped
// pair minimum instead of Q1 alone.
class QSkillSelector final : public SkillSelector {
 public:
  QSkillSelector(qlearn::CandidateSampler& sampler, qlearn::QEval q1, qlearn::QEval q2,
                 int n, bool use_min = false)
      : sampler_(sampler), q1_(std::move(q1)), q2_(std::move(q2)), n_(n),
        use_min_(use_min) {}
  VectorXd select(const VectorXd& state, const VectorXd& goal, Rng& rng) override;

 private:
  qlearn::CandidateSampler& sampler_;
  qlearn::QEval q1_, q2_;
  int n_;
  bool use_min_;
};

// LDGC: one guided sample from the goal-conditioned prior (condition is
// [s; goal]). With n > 1 and a world model attached, the candidate whose
// predicted outcome lands closest to the goal wins.
class GoalCondSelector final : public SkillSelector {
 public:
  GoalCondSelector(const diffusion::PriorModel& prior, diffusion::GuidanceSpec guidance,
                   int n = 1)
      : prior_(prior), guidance_(guidance), n_(n) {}
  VectorXd select(const VectorXd& state, const VectorXd& goal, Rng& rng) override;

  // optional outcome scorer supplied by the planner module
  std::function<Mat(const Mat& states, const Mat& latents)> predict_outcome;

 private:
  const diffusion::PriorModel& prior_;
  diffusion::GuidanceSpec guidance_;
  int n_;
};

// Fixed skill-provider wrapper used by tests and the behavior baseline.
class CallbackSelector final : public SkillSelector {
 public:
  explicit CallbackSelector(
      std::function<VectorXd(const VectorXd&, const VectorXd&, Rng&)> fn)
      : fn_(std::move(fn)) {}
  VectorXd select(const VectorXd& state, const VectorXd& goal, Rng& rng) override {
    ++selections;
    return fn_(state, goal, rng);
  }

 private:
  std::function<VectorXd(const VectorXd&, const VectorXd&, Rng&)> fn_;
};

struct EpisodeRow {
  double ret = 0.0;
  bool success = false;
  int steps = 0;
  int skill_selections = 0;
};

struct EvalReport {
  std::string env, mode;
  std::vector<EpisodeRow> rows;
  double mean_return = 0.0;
  double stderr_return = 0.0;
  double success_rate = 0.0;
  double wall_clock_s = 0.0;

  void finalize();
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct RolloutOptions {
  int horizon = 10;          // steps executed per selected skill
  int episodes = 100;
  bool sample_actions = false;  // false: decoder means (deterministic eval)
  std::string mode = "ldcq";
};

// Deployment loop: select a skill, decode and execute up to H actions,
// replan, stop on done/timeout. Actions are clamped to the env bounds at
// decode time. Deterministic per seed.
EvalReport rollout(envs::Env& env, const vae::VaeModel& decoder, SkillSelector& selector,
                   const RolloutOptions& opt, std::uint64_t seed);

// Baseline: the env's scripted behavior policy on the same episode seeds.
EvalReport rollout_behavior(envs::Env& env, int episodes, std::uint64_t seed);

}  // namespace ldcq::exec
