#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ldcq/rng.hpp"

namespace ldcq::analysis {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PcaResult {
  MatrixXd projections;  // k x N
  VectorXd explained;    // variance share per component, descending
  MatrixXd components;   // d x k, orthonormal columns
  VectorXd mean;
};

// Centers the data, eigendecomposes the covariance, projects onto the top-k
// eigenvectors. Throws on all-identical input (zero variance).
PcaResult pca_project(const MatrixXd& data, int k);

struct KMeansResult {
  MatrixXd centers;  // d x k
  std::vector<int> labels;
  double inertia = 0.0;
};

// Lloyd iterations from kmeans++ seeds; best of `restarts` runs.
KMeansResult kmeans(const MatrixXd& data, int k, Rng& rng, int iters = 100,
                    int restarts = 4);

double silhouette(const MatrixXd& data, const std::vector<int>& labels);

struct ModeCoverage {
  double d_star = 0.0;            // 95th percentile dataset NN distance
  double in_support_fraction = 0.0;
  std::vector<double> cluster_mass;  // sample mass per dataset cluster
};

// In-support fraction: share of samples within d_star of some dataset point.
// Cluster mass: k-means fit on the dataset latents, samples assigned to the
// nearest center.
ModeCoverage mode_coverage(const MatrixXd& dataset_latents, const MatrixXd& samples,
                           int k, Rng& rng);

// companion: distance from each column of `points` to its nearest column of
// `reference` (excluding self-matches when the matrices share storage)
VectorXd nearest_neighbor_distances(const MatrixXd& points, const MatrixXd& reference,
                                    bool exclude_self);

}  // namespace ldcq::analysis
