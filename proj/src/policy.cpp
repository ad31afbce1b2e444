#include "ldcq/policy.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ldcq/errors.hpp"

namespace ldcq::exec {

VectorXd QSkillSelector::select(const VectorXd& state, const VectorXd&, Rng& rng) {
  ++selections;
  const Mat latents = sampler_.sample(state, n_, rng);
  Mat states_rep = state.replicate(1, n_);
  const Eigen::RowVectorXd s1 = q1_(states_rep, latents);
  Eigen::RowVectorXd scores = s1;
  if (use_min_) scores = s1.cwiseMin(q2_(states_rep, latents));
  int best = 0;
  for (int i = 1; i < n_; ++i)
    if (scores(i) > scores(best)) best = i;  // ties keep the lowest index
  return latents.col(best);
}

VectorXd GoalCondSelector::select(const VectorXd& state, const VectorXd& goal, Rng& rng) {
  ++selections;
  if (goal.size() == 0)
    throw std::invalid_argument("GoalCondSelector: goal required");
  VectorXd cond(state.size() + goal.size());
  cond << state, goal;
  if (static_cast<int>(cond.size()) != prior_.spec.cond_dim)
    throw std::invalid_argument("GoalCondSelector: prior not goal-conditioned");
  const Mat latents = diffusion::ddpm_sample_batch(prior_, cond, n_, guidance_, rng);
  if (n_ == 1 || !predict_outcome) return latents.col(0);
  const Mat outcomes = predict_outcome(state.replicate(1, n_), latents);
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_; ++i) {
    const double cost = (outcomes.col(i).head(goal.size()) - goal).norm();
    if (cost < best_cost) {
      best_cost = cost;
      best = i;
    }
  }
  return latents.col(best);
}

void EvalReport::finalize() {
  const int n = static_cast<int>(rows.size());
  if (n == 0) return;
  double sum = 0.0, success = 0.0;
  for (const auto& r : rows) {
    sum += r.ret;
    success += r.success ? 1.0 : 0.0;
  }
  mean_return = sum / n;
  success_rate = success / n;
  double var = 0.0;
  for (const auto& r : rows) var += (r.ret - mean_return) * (r.ret - mean_return);
  stderr_return = n > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["env"] = env;
  j["mode"] = mode;
  j["episodes"] = rows.size();
  j["mean_return"] = mean_return;
  j["stderr_return"] = stderr_return;
  j["success_rate"] = success_rate;
  j["wall_clock_s"] = wall_clock_s;
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row;
    row["return"] = r.ret;
    row["success"] = r.success;
    row["steps"] = r.steps;
    row["skill_selections"] = r.skill_selections;
    arr.push_back(std::move(row));
  }
  j["rows"] = std::move(arr);
  return j;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "episode,return,success,steps,skill_selections\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    os << i << "," << rows[i].ret << "," << (rows[i].success ? 1 : 0) << ","
       << rows[i].steps << "," << rows[i].skill_selections << "\n";
  return os.str();
}

namespace {

VectorXd clamp_action(const envs::EnvDescriptor& d, VectorXd a) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    a(i) = std::clamp(a(i), d.action_low(i), d.action_high(i));
  return a;
}

}  // namespace

EvalReport rollout(envs::Env& env, const vae::VaeModel& decoder, SkillSelector& selector,
                   const RolloutOptions& opt, std::uint64_t seed) {
  if (decoder.env.state_dim != env.descriptor().state_dim ||
      decoder.env.action_dim != env.descriptor().action_dim)
    throw ConfigError("rollout: decoder/env dimension mismatch");
  if (opt.horizon < 1) throw ConfigError("rollout: horizon >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.env = env.descriptor().name;
  report.mode = opt.mode;
  const Rng root(seed);
  for (int e = 0; e < opt.episodes; ++e) {
    Rng ep_rng = root.stream("episode", static_cast<std::uint64_t>(e));
    VectorXd s = env.reset(ep_rng);
    const VectorXd goal = env.descriptor().has_goal ? env.goal() : VectorXd();
    EpisodeRow row;
    bool done = false;
    const long before = selector.selections;
    while (!done && row.steps < env.descriptor().horizon_limit) {
      const VectorXd z = selector.select(s, goal, ep_rng);
      for (int h = 0; h < opt.horizon && !done &&
                      row.steps < env.descriptor().horizon_limit;
           ++h) {
        VectorXd a = vae::decode_full_action(decoder, s, z,
                                             opt.sample_actions ? &ep_rng : nullptr);
        a = clamp_action(env.descriptor(), a);
        auto [next, reward, step_done] = env.step(a);
        s = next;
        row.ret += reward;
        ++row.steps;
        if (step_done) {
          done = true;
          row.success = reward > 0.0;
        }
      }
    }
    row.skill_selections = static_cast<int>(selector.selections - before);
    report.rows.push_back(row);
  }
  report.finalize();
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

EvalReport rollout_behavior(envs::Env& env, int episodes, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.env = env.descriptor().name;
  report.mode = "behavior";
  const Rng root(seed);
  for (int e = 0; e < episodes; ++e) {
    Rng ep_rng = root.stream("episode", static_cast<std::uint64_t>(e));
    env.reset(ep_rng);
    EpisodeRow row;
    bool done = false;
    while (!done && row.steps < env.descriptor().horizon_limit) {
      auto [next, reward, step_done] = env.step(env.behavior_action(ep_rng));
      row.ret += reward;
      ++row.steps;
      if (step_done) {
        done = true;
        row.success = reward > 0.0;
      }
    }
    report.rows.push_back(row);
  }
  report.finalize();
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace ldcq::exec
