#include "ldcq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ldcq::analysis {

PcaResult pca_project(const MatrixXd& data, int k) {
  const int d = static_cast<int>(data.rows());
  const int n = static_cast<int>(data.cols());
  if (k < 1 || k > d) throw std::invalid_argument("pca_project: k in [1, dim]");
  if (n < k + 1) throw std::invalid_argument("pca_project: need at least k+1 points");
  PcaResult res;
  res.mean = data.rowwise().mean();
  MatrixXd centered = data.colwise() - res.mean;
  MatrixXd cov = centered * centered.transpose() / static_cast<double>(n - 1);
  const double total_var = cov.trace();
  if (total_var <= 1e-300)
    throw std::invalid_argument("pca_project: zero-variance input");
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
  // eigenvalues ascend; take the top k in descending order
  res.components.resize(d, k);
  res.explained.resize(k);
  for (int i = 0; i < k; ++i) {
    res.components.col(i) = solver.eigenvectors().col(d - 1 - i);
    res.explained(i) = std::max(0.0, solver.eigenvalues()(d - 1 - i)) / total_var;
  }
  res.projections = res.components.transpose() * centered;
  return res;
}

KMeansResult kmeans(const MatrixXd& data, int k, Rng& rng, int iters, int restarts) {
  const int n = static_cast<int>(data.cols());
  if (k < 1 || n < k) throw std::invalid_argument("kmeans: need at least k points");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    // kmeans++ seeding
    MatrixXd centers(data.rows(), k);
    centers.col(0) = data.col(rng.uniform_int(0, n - 1));
    VectorXd d2 = (data.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      int pick = 0;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (; pick < n - 1; ++pick) {
          u -= d2(pick);
          if (u <= 0.0) break;
        }
      } else {
        pick = static_cast<int>(rng.uniform_int(0, n - 1));
      }
      centers.col(c) = data.col(pick);
      d2 = d2.cwiseMin((data.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
    }

    std::vector<int> labels(n, 0);
    for (int it = 0; it < iters; ++it) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = (data.col(i) - centers.col(0)).squaredNorm();
        for (int c = 1; c < k; ++c) {
          const double dist = (data.col(i) - centers.col(c)).squaredNorm();
          if (dist < bestd) {
            bestd = dist;
            arg = c;
          }
        }
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
      }
      MatrixXd sums = MatrixXd::Zero(data.rows(), k);
      VectorXd counts = VectorXd::Zero(k);
      for (int i = 0; i < n; ++i) {
        sums.col(labels[i]) += data.col(i);
        counts(labels[i]) += 1.0;
      }
      for (int c = 0; c < k; ++c)
        if (counts(c) > 0.0) centers.col(c) = sums.col(c) / counts(c);
      if (!changed && it > 0) break;
    }
    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
      inertia += (data.col(i) - centers.col(labels[i])).squaredNorm();
    if (inertia < best.inertia) {
      best.centers = centers;
      best.labels = labels;
      best.inertia = inertia;
    }
  }
  return best;
}

double silhouette(const MatrixXd& data, const std::vector<int>& labels) {
  const int n = static_cast<int>(data.cols());
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("silhouette: label count mismatch");
  const int k = 1 + *std::max_element(labels.begin(), labels.end());
  if (k < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");
  std::vector<int> counts(k, 0);
  for (int l : labels) ++counts[l];

  double acc = 0.0;
  int used = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> mean_dist(k, 0.0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_dist[labels[j]] += (data.col(i) - data.col(j)).norm();
    }
    const int own = labels[i];
    if (counts[own] <= 1) continue;  // singleton clusters contribute 0
    double a = mean_dist[own] / (counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == own || counts[c] == 0) continue;
      b = std::min(b, mean_dist[c] / counts[c]);
    }
    acc += (b - a) / std::max(a, b);
    ++used;
  }
  return used > 0 ? acc / used : 0.0;
}

VectorXd nearest_neighbor_distances(const MatrixXd& points, const MatrixXd& reference,
                                    bool exclude_self) {
  const int n = static_cast<int>(points.cols());
  const int m = static_cast<int>(reference.cols());
  VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      const double d = (points.col(i) - reference.col(j)).norm();
      if (exclude_self && i == j) continue;
      best = std::min(best, d);
    }
    out(i) = best;
  }
  return out;
}

ModeCoverage mode_coverage(const MatrixXd& dataset_latents, const MatrixXd& samples,
                           int k, Rng& rng) {
  if (dataset_latents.cols() == 0 || samples.cols() == 0)
    throw std::invalid_argument("mode_coverage: empty inputs");
  ModeCoverage res;
  VectorXd nn = nearest_neighbor_distances(dataset_latents, dataset_latents, true);
  std::vector<double> sorted(nn.data(), nn.data() + nn.size());
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(0.95 * (sorted.size() - 1));
  res.d_star = sorted[idx];

  const VectorXd sample_nn = nearest_neighbor_distances(samples, dataset_latents, false);
  res.in_support_fraction =
      (sample_nn.array() <= res.d_star).cast<double>().mean();

  const auto clusters = kmeans(dataset_latents, k, rng);
  res.cluster_mass.assign(k, 0.0);
  for (int i = 0; i < samples.cols(); ++i) {
    int arg = 0;
    double best = (samples.col(i) - clusters.centers.col(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double d = (samples.col(i) - clusters.centers.col(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    res.cluster_mass[arg] += 1.0 / samples.cols();
  }
  return res;
}

}  // namespace ldcq::analysis
