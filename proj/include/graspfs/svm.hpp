#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace graspfs {

double rbf_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                  const Eigen::Ref<const Eigen::RowVectorXd>& b, double gamma);

// One soft-margin machine separating `positive` (+1) from `negative` (-1):
// f(x) = sum_i coef[i] * K(sv_i, x) - rho, with coef[i] = alpha_i * y_i.
struct BinarySvm {
  int positive = 0;
  int negative = 0;
  Eigen::MatrixXd support_vectors;
  std::vector<double> coef;
  std::vector<std::size_t> sv_indices;  // rows of the training matrix
  double rho = 0;
  double kkt_residual = 0;  // max violating-pair gap at termination
  std::size_t iterations = 0;

  double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x, double gamma) const;
};

struct SvmOptions {
  double tolerance = 1e-3;
  std::size_t max_iterations = 1'000'000;
};

// Multiclass RBF SVM, one machine per class pair, prediction by vote with
// ties going to the smallest label.
struct SvmModel {
  double C = 1;
  double gamma = 1;
  std::vector<int> classes;  // ascending
  std::vector<BinarySvm> machines;

  int predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  std::vector<int> predict_all(const Eigen::MatrixXd& X) const;
  double max_kkt_residual() const;
};

// SMO with second-order working-set selection. Throws ConfigError with fewer
// than two classes or mismatched sizes, NumericError when the iteration cap is
// hit before the tolerance is met.
SvmModel svm_train(const Eigen::MatrixXd& X, const std::vector<int>& y, double C, double gamma,
                   const SvmOptions& options = {});

// KKT gap m(alpha) - M(alpha) of a binary dual solution on its training data.
double kkt_residual(const Eigen::MatrixXd& X, const std::vector<int>& signs,
                    const std::vector<double>& alpha, double C, double gamma);

// Stratified fold id per sample: members of each class, in order of
// appearance, are dealt round-robin to folds.
std::vector<std::size_t> stratified_folds(const std::vector<int>& y, std::size_t folds);

struct GridSearchResult {
  double best_C = 0;
  double best_accuracy = 0;
  std::vector<double> accuracies;  // per grid entry
  std::size_t folds_used = 0;
  std::string warning;  // set when folds had to be reduced
};

// Cross-validated accuracy per C; ties go to the smaller C, then to the
// earlier grid entry.
// Folds are reduced to the smallest class count when needed.
GridSearchResult grid_search_C(const Eigen::MatrixXd& X, const std::vector<int>& y,
                               const std::vector<double>& grid, std::size_t folds, double gamma,
                               const SvmOptions& options = {});

}  // namespace graspfs
