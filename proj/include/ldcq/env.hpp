#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ldcq/rng.hpp"

namespace ldcq::envs {

using Eigen::VectorXd;

struct EnvDescriptor {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  VectorXd action_low, action_high;
  int horizon_limit = 0;
  bool has_goal = false;
  int goal_dim = 0;

  nlohmann::json to_json() const;
  static EnvDescriptor from_json(const nlohmann::json& j);
};

struct StepResult {
  VectorXd next_state;
  double reward = 0.0;
  bool done = false;
};

// Desk-scale MDP with a scripted behavior policy. Deterministic dynamics;
// the only stochasticity is what flows through the Rng arguments.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvDescriptor& descriptor() const = 0;
  virtual VectorXd reset(Rng& rng) = 0;
  virtual const VectorXd& state() const = 0;
  virtual StepResult step(const VectorXd& action) = 0;
  virtual VectorXd behavior_action(Rng& rng) = 0;
  // replay/planning support
  virtual void set_state(const VectorXd& s) = 0;
  virtual VectorXd goal() const { return VectorXd(); }
  virtual void set_goal(const VectorXd&) {}
};

// 1-D random walk on [-10, 10]: +10 and terminal at either wall, -1 per step
// otherwise; scripted behavior draws from U([-1,-0.8] u [0.8,1]).
class RandomWalk1d final : public Env {
 public:
  RandomWalk1d();
  const EnvDescriptor& descriptor() const override { return desc_; }
  VectorXd reset(Rng& rng) override;
  const VectorXd& state() const override { return state_; }
  StepResult step(const VectorXd& action) override;
  VectorXd behavior_action(Rng& rng) override;
  void set_state(const VectorXd& s) override { state_ = s; }

 private:
  EnvDescriptor desc_;
  VectorXd state_;
};

// 2-D point agent with three reward sites at 120-degree spacing; the
// behavior policy commits to one site per episode and walks noisily toward
// it. Arrival at any site gives +1 and ends the episode.
class TrimodalPoint final : public Env {
 public:
  TrimodalPoint();
  const EnvDescriptor& descriptor() const override { return desc_; }
  VectorXd reset(Rng& rng) override;
  const VectorXd& state() const override { return state_; }
  StepResult step(const VectorXd& action) override;
  VectorXd behavior_action(Rng& rng) override;
  void set_state(const VectorXd& s) override { state_ = s; }

  const std::vector<VectorXd>& sites() const { return sites_; }
  int behavior_site() const { return chosen_site_; }
  static constexpr double kMaxSpeed = 0.5;
  static constexpr double kArrivalRadius = 0.6;

 private:
  EnvDescriptor desc_;
  VectorXd state_;
  std::vector<VectorXd> sites_;
  int chosen_site_ = 0;
};

// Continuous point agent in a walled grid maze with a per-episode goal cell.
// The behavior policy performs undirected random-waypoint navigation over
// the free-cell graph. Sparse 0/1 reward on entering the goal cell.
class GridMaze final : public Env {
 public:
  explicit GridMaze(const std::string& layout_id);
  const EnvDescriptor& descriptor() const override { return desc_; }
  VectorXd reset(Rng& rng) override;
  const VectorXd& state() const override { return state_; }
  StepResult step(const VectorXd& action) override;
  VectorXd behavior_action(Rng& rng) override;
  void set_state(const VectorXd& s) override { state_ = s; }
  VectorXd goal() const override { return goal_; }
  void set_goal(const VectorXd& g) override { goal_ = g; }

  bool is_free(double x, double y) const;
  int free_cell_count() const { return static_cast<int>(free_cells_.size()); }
  int cell_index(double x, double y) const;  // -1 for walls
  VectorXd cell_center(int free_cell_idx) const;
  // world position of the junction cell (used by analysis fixtures)
  VectorXd junction() const;
  static constexpr double kMaxStep = 0.35;

 private:
  int cell_at(double x, double y) const;  // raw grid indexing helper
  std::vector<int> bfs_path(int from_cell, int to_cell) const;

  EnvDescriptor desc_;
  std::vector<std::string> grid_;
  int width_ = 0, height_ = 0;
  std::vector<std::pair<int, int>> free_cells_;
  std::vector<int> cell_to_free_;  // flat grid index -> free cell index (-1 wall)
  VectorXd state_, goal_;
  std::vector<int> waypoint_path_;  // remaining free-cell indices to visit
};

// Factory for the built-in environments: "rw1d", "trimodal", "gridmaze"
// (optionally "gridmaze:<layout>"). Unknown names/layouts are configuration
// errors.
std::unique_ptr<Env> make_env(const std::string& name);

}  // namespace ldcq::envs
