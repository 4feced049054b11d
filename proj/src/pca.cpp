#include "graspfs/pca.hpp"

#include <cmath>
#include <string>

#include "graspfs/errors.hpp"

namespace graspfs {

namespace {

// Eigenvalues below this fraction of the largest are treated as zero.
constexpr double kRankTolerance = 1e-12;

void orient(Eigen::MatrixXd& comps, Eigen::Index r) {
  auto row = comps.row(r);
  const double scale = row.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (std::abs(row[j]) > 1e-12 * scale) {
      if (row[j] < 0) row = -row;
      return;
    }
  }
}

// Fills rows [from, k) with unit vectors orthogonal to all earlier rows by
// Gram-Schmidt over the standard basis.
void complete_basis(Eigen::MatrixXd& comps, Eigen::Index from) {
  const Eigen::Index d = comps.cols();
  Eigen::Index row = from;
  for (Eigen::Index e = 0; e < d && row < comps.rows(); ++e) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Unit(d, e);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index r = 0; r < row; ++r) v -= v.dot(comps.row(r)) * comps.row(r);
    }
    const double norm = v.norm();
    if (norm > 1e-6) comps.row(row++) = v / norm;
  }
}

}  // namespace

PcaProjection pca_fit(const Eigen::MatrixXd& X, std::size_t k) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2) throw ConfigError("PCA needs at least 2 samples, got " + std::to_string(n));
  const auto max_k = static_cast<std::size_t>(std::min(n - 1, d));
  if (k < 1 || k > max_k) {
    throw ConfigError("PCA k=" + std::to_string(k) + " outside [1, " + std::to_string(max_k) +
                      "] for " + std::to_string(n) + " samples of dimension " + std::to_string(d));
  }
  if (!X.allFinite()) throw NumericError("PCA input contains non-finite values");

  PcaProjection p;
  p.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - p.mean.transpose();
  const auto kk = static_cast<Eigen::Index>(k);
  p.components.resize(kk, d);
  p.explained_variance.resize(kk);

  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd directions;  // columns in descending eigenvalue order
  if (n <= d) {
    const Eigen::MatrixXd gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw NumericError("Gram eigendecomposition failed");
    eigenvalues = solver.eigenvalues().reverse();
    directions = solver.eigenvectors().rowwise().reverse();
  } else {
    const Eigen::MatrixXd scatter = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scatter);
    if (solver.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
    eigenvalues = solver.eigenvalues().reverse();
    directions = solver.eigenvectors().rowwise().reverse();
  }

  const double top = std::max(eigenvalues[0], 0.0);
  Eigen::Index rank = 0;
  for (; rank < kk; ++rank) {
    const double lambda = eigenvalues[rank];
    if (!(lambda > kRankTolerance * top) || top == 0.0) break;
    if (n <= d) {
      p.components.row(rank) = (centered.transpose() * directions.col(rank)).transpose() / std::sqrt(lambda);
    } else {
      p.components.row(rank) = directions.col(rank).transpose();
    }
    p.explained_variance[rank] = lambda / static_cast<double>(n);
  }
  complete_basis(p.components, rank);
  for (Eigen::Index r = rank; r < kk; ++r) p.explained_variance[r] = 0.0;
  for (Eigen::Index r = 0; r < kk; ++r) orient(p.components, r);
  return p;
}

Eigen::MatrixXd pca_transform(const PcaProjection& p, const Eigen::MatrixXd& X) {
  if (X.cols() != p.mean.size()) {
    throw ConfigError("PCA transform expects " + std::to_string(p.mean.size()) + " columns, got " +
                      std::to_string(X.cols()));
  }
  return (X.rowwise() - p.mean.transpose()) * p.components.transpose();
}

}  // namespace graspfs
