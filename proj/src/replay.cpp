#include "ldcq/replay.hpp"

#include <cmath>
#include <stdexcept>

namespace ldcq::qlearn {

SumTree::SumTree(int capacity) {
  capacity_ = 1;
  while (capacity_ < capacity) capacity_ *= 2;  // complete tree needs a power of two
  tree_.assign(2 * capacity_, 0.0);
}

void SumTree::set(int index, double mass) {
  if (index < 0 || index >= capacity_) throw std::out_of_range("SumTree::set");
  int i = index + capacity_;
  tree_[i] = mass;
  for (i /= 2; i >= 1; i /= 2) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
}

double SumTree::get(int index) const { return tree_[index + capacity_]; }

int SumTree::find(double prefix) const {
  int i = 1;
  while (i < capacity_) {
    const double left = tree_[2 * i];
    if (prefix < left) {
      i = 2 * i;
    } else {
      prefix -= left;
      i = 2 * i + 1;
    }
  }
  return i - capacity_;
}

PrioritizedBuffer::PrioritizedBuffer(int capacity_hint, double per_alpha, double per_eps)
    : alpha_(per_alpha), eps_(per_eps), tree_(std::max(1, capacity_hint)) {
  if (per_alpha < 0.0) throw std::invalid_argument("PrioritizedBuffer: alpha >= 0");
  if (per_eps <= 0.0) throw std::invalid_argument("PrioritizedBuffer: eps > 0");
}

double PrioritizedBuffer::mass_of(double raw) const { return std::pow(raw, alpha_); }

void PrioritizedBuffer::grow(int needed) {
  if (needed <= tree_.capacity()) return;
  int cap = tree_.capacity();
  while (cap < needed) cap *= 2;
  SumTree bigger(cap);
  for (int i = 0; i < size(); ++i) bigger.set(i, tree_.get(i));
  tree_ = std::move(bigger);
}

void PrioritizedBuffer::add(SkillTransition t) {
  grow(size() + 1);
  data_.push_back(std::move(t));
  raw_p_.push_back(max_raw_p_);
  tree_.set(size() - 1, mass_of(max_raw_p_));
}

double PrioritizedBuffer::beta() const {
  const double b = beta_start + beta_growth * static_cast<double>(train_step_ / beta_interval);
  return std::min(1.0, b);
}

PrioritizedBuffer::Batch PrioritizedBuffer::sample(int N, Rng& rng) const {
  if (size() == 0) throw std::runtime_error("PrioritizedBuffer: sample from empty buffer");
  Batch batch;
  batch.indices.reserve(N);
  batch.weights.reserve(N);
  const double total = tree_.total();
  const double b = beta();
  const double n_total = static_cast<double>(size());
  double max_w = 0.0;
  for (int k = 0; k < N; ++k) {
    const int idx = tree_.find(rng.uniform() * total);
    batch.indices.push_back(idx);
    const double prob = tree_.get(idx) / total;
    const double w = std::pow(n_total * prob, -b);
    batch.weights.push_back(w);
    max_w = std::max(max_w, w);
  }
  for (double& w : batch.weights) w /= max_w;
  return batch;
}

void PrioritizedBuffer::update_priorities(const std::vector<int>& indices,
                                          const std::vector<double>& td_errors) {
  if (indices.size() != td_errors.size())
    throw std::invalid_argument("update_priorities: size mismatch");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= size()) throw std::out_of_range("update_priorities: index");
    const double raw = std::abs(td_errors[i]) + eps_;
    raw_p_[idx] = raw;
    max_raw_p_ = std::max(max_raw_p_, raw);
    tree_.set(idx, mass_of(raw));
  }
}

}  // namespace ldcq::qlearn
