#include "ldcq/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ldcq::nn {

Mat& ParameterBundle::add(const std::string& name, Mat value) {
  auto [it, inserted] = items_.emplace(name, std::move(value));
  if (!inserted) throw std::invalid_argument("ParameterBundle: duplicate " + name);
  return it->second;
}

Mat& ParameterBundle::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::out_of_range("ParameterBundle: missing " + name);
  return it->second;
}

const Mat& ParameterBundle::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::out_of_range("ParameterBundle: missing " + name);
  return it->second;
}

std::size_t ParameterBundle::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : items_) n += static_cast<std::size_t>(m.size());
  return n;
}

bool ParameterBundle::all_finite() const {
  for (const auto& [_, m] : items_)
    if (!m.allFinite()) return false;
  return true;
}

ParameterBundle ParameterBundle::subset(const std::string& prefix) const {
  ParameterBundle out;
  for (const auto& [name, m] : items_)
    if (name.rfind(prefix, 0) == 0) out.add(name, m);
  return out;
}

void ParameterBundle::merge(const ParameterBundle& other) {
  for (const auto& [name, m] : other.items_) add(name, m);
}

void adam_step(OptState& opt, ParameterBundle& params, const ParameterBundle& grads) {
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (auto& [name, p] : params.items()) {
    const Mat& g = grads.at(name);
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    if (!g.allFinite())
      throw TrainingDivergence("adam_step: non-finite gradient for " + name);
    Mat& m = opt.m.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
    Mat& v = opt.v.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
    const Mat m_hat = m / bc1;
    const Mat v_hat = v / bc2;
    p.array() -= opt.lr * m_hat.array() / (v_hat.array().sqrt() + opt.eps);
  }
}

BoundParams::BoundParams(Graph& g, const ParameterBundle& params) {
  for (const auto& [name, m] : params.items()) vars_.emplace(name, g.input(m));
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("BoundParams: missing " + name);
  return it->second;
}

ParameterBundle BoundParams::grads() const {
  ParameterBundle out;
  for (const auto& [name, v] : vars_) out.add(name, v.grad());
  return out;
}

}  // namespace ldcq::nn
