#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace ldcq {

// Deterministic random source with named substreams. Everything stochastic in
// the project draws through this wrapper, so a run is reproducible bit-for-bit
// from a single top-level seed. Substreams are derived from the *construction*
// seed, never from consumption state: rng.stream("eval") is the same stream no
// matter how many draws happened in between.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  static std::uint64_t derive(std::uint64_t seed, std::string_view name);

  Rng stream(std::string_view name) const { return Rng(derive(seed_, name)); }
  Rng stream(std::string_view name, std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // inclusive bounds
  long uniform_int(long lo, long hi);
  double normal();
  Eigen::VectorXd normal_vector(int n);
  Eigen::MatrixXd normal_matrix(int rows, int cols);

  // number of normal variates handed out so far (used by sampler tests to
  // verify how much noise a procedure consumed)
  std::uint64_t normal_draws() const { return normal_draws_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  std::uint64_t normal_draws_ = 0;
};

}  // namespace ldcq
