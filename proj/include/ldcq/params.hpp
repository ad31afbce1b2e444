#pragma once

#include <map>
#include <string>

#include "ldcq/autodiff.hpp"
#include "ldcq/rng.hpp"

namespace ldcq::nn {

// Named parameter arrays plus their shapes. Bundles copy deeply (std::map of
// Eigen matrices), which is what target networks rely on.
class ParameterBundle {
 public:
  Mat& add(const std::string& name, Mat value);
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool has(const std::string& name) const { return items_.count(name) > 0; }
  std::map<std::string, Mat>& items() { return items_; }
  const std::map<std::string, Mat>& items() const { return items_; }
  std::size_t count() const { return items_.size(); }
  std::size_t scalar_count() const;
  bool all_finite() const;
  ParameterBundle copy() const { return *this; }
  // sub-bundle of all entries whose name starts with `prefix`
  ParameterBundle subset(const std::string& prefix) const;
  void merge(const ParameterBundle& other);  // throws on name collision

 private:
  std::map<std::string, Mat> items_;  // ordered: deterministic iteration
};

struct OptState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, Mat> m, v;
};

// Standard Adam with bias correction. Moment buffers are created lazily and
// must match parameter shapes afterwards. Throws TrainingDivergence on
// non-finite gradients.
void adam_step(OptState& opt, ParameterBundle& params, const ParameterBundle& grads);

// Binds every parameter of a bundle as a leaf of `g` so that a single
// backward() yields the full gradient bundle.
class BoundParams {
 public:
  BoundParams(Graph& g, const ParameterBundle& params);
  Var operator[](const std::string& name) const;
  ParameterBundle grads() const;  // valid after g.backward()

 private:
  std::map<std::string, Var> vars_;
};

}  // namespace ldcq::nn
