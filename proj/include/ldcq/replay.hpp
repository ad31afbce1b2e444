#pragma once

#include <vector>

#include <Eigen/Core>

#include "ldcq/rng.hpp"

namespace ldcq::qlearn {

using Eigen::VectorXd;

// One temporally abstract transition: H env steps collapsed into a single
// (state, skill, discounted in-window return, outcome state) tuple.
struct SkillTransition {
  VectorXd s;
  VectorXd z;
  double ret = 0.0;
  VectorXd s_next;
  bool terminal = false;  // bootstrap suppressed
  int steps_valid = 0;    // bootstrap discount is gamma^steps_valid
};

// Flat array-backed sum tree; leaves hold the sampling mass of each slot.
class SumTree {
 public:
  explicit SumTree(int capacity);
  void set(int index, double mass);
  double get(int index) const;
  double total() const { return tree_[1]; }  // root of the 1-indexed tree
  int find(double prefix) const;  // largest index with cumsum <= prefix
  int capacity() const { return capacity_; }

 private:
  int capacity_;
  std::vector<double> tree_;
};

// Proportional prioritized replay. Raw priorities p_i = |delta| + eps are
// stored as-is; the alpha exponent is applied in the sampling mass, so
// P(i) = p_i^alpha / sum_j p_j^alpha. Importance weights are normalized by
// the batch maximum. beta follows a linear schedule driven by the training
// step the owner sets.
class PrioritizedBuffer {
 public:
  explicit PrioritizedBuffer(int capacity_hint = 1024, double per_alpha = 0.7,
                             double per_eps = 1e-3);

  void add(SkillTransition t);  // enters at max priority
  int size() const { return static_cast<int>(data_.size()); }
  const SkillTransition& at(int i) const { return data_.at(i); }
  double raw_priority(int i) const { return raw_p_.at(i); }
  double alpha() const { return alpha_; }

  struct Batch {
    std::vector<int> indices;
    std::vector<double> weights;
  };
  Batch sample(int N, Rng& rng) const;

  void update_priorities(const std::vector<int>& indices,
                         const std::vector<double>& td_errors);

  // beta schedule: start + growth * floor(step / interval), capped at 1
  void set_train_step(long step) { train_step_ = step; }
  double beta() const;
  double beta_start = 0.3, beta_growth = 0.03;
  long beta_interval = 3000;

 private:
  double mass_of(double raw) const;
  void grow(int needed);

  double alpha_, eps_;
  long train_step_ = 0;
  std::vector<SkillTransition> data_;
  std::vector<double> raw_p_;
  SumTree tree_;
  double max_raw_p_ = 1.0;
};

}  // namespace ldcq::qlearn
