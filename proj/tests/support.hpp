#pragma once

// Shared test oracles. These stay independent of the implementation paths
// they check: finite differences for gradients, plain loops for sums and
// cumulative products.

#include <functional>

#include "ldcq/params.hpp"

namespace testsupport {

using ldcq::nn::Mat;
using ldcq::nn::ParameterBundle;

// Central finite differences against an analytic gradient bundle. Returns
// the max relative error over every coordinate (relative to the larger of
// |analytic|, |numeric|, and a floor).
inline double fd_max_rel_error(const std::function<double(const ParameterBundle&)>& loss,
                               const ParameterBundle& at, const ParameterBundle& analytic,
                               double h = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  for (const auto& [name, m] : at.items()) {
    const Mat& g = analytic.at(name);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ParameterBundle plus = at, minus = at;
        plus.at(name)(i, j) += h;
        minus.at(name)(i, j) -= h;
        const double num = (loss(plus) - loss(minus)) / (2.0 * h);
        const double denom = std::max({std::abs(num), std::abs(g(i, j)), floor});
        worst = std::max(worst, std::abs(num - g(i, j)) / denom);
      }
  }
  return worst;
}

inline double loop_discounted_sum(const std::vector<double>& r, int n, double gamma) {
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += std::pow(gamma, k) * r[k];
  return acc;
}

}  // namespace testsupport
