#pragma once

#include <Eigen/Dense>

namespace graspfs {

// components holds k orthonormal rows; explained_variance[i] is the variance
// (normalised by n) of the data along row i, non-increasing.
struct PcaProjection {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;
  Eigen::VectorXd explained_variance;

  std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(components.rows()); }
};

// Top-k principal directions of the rows of X. Uses the n x n Gram matrix
// when n <= d and the d x d covariance otherwise. Directions beyond the rank
// of the data get zero variance and are completed deterministically. Each
// component's first nonzero entry is positive. Requires n >= 2 and
// 1 <= k <= min(n - 1, d).
PcaProjection pca_fit(const Eigen::MatrixXd& X, std::size_t k);

// (X - mean) * components^T.
Eigen::MatrixXd pca_transform(const PcaProjection& p, const Eigen::MatrixXd& X);

}  // namespace graspfs
