#include "ldcq/rng.hpp"

#include <cmath>

namespace ldcq {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::derive(std::uint64_t seed, std::string_view name) {
  return splitmix64(splitmix64(seed) ^ fnv1a(name));
}

Rng Rng::stream(std::string_view name, std::uint64_t index) const {
  return Rng(splitmix64(derive(seed_, name) ^ splitmix64(index + 0x51ab2ecf)));
}

double Rng::uniform() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

long Rng::uniform_int(long lo, long hi) {
  // rejection-free for our purposes; the tiny modulo bias of a 53-bit draw
  // over desk-scale ranges is far below anything the tests can observe
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<long>((eng_() >> 11) % span);
}

double Rng::normal() {
  // Box-Muller; the second variate is discarded so each call is stateless
  ++normal_draws_;
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Eigen::VectorXd Rng::normal_vector(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Eigen::MatrixXd Rng::normal_matrix(int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  // column-major fill so a matrix equals stacking normal_vector() columns
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = normal();
  return m;
}

}  // namespace ldcq
