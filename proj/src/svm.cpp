#include "graspfs/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "graspfs/errors.hpp"

namespace graspfs {

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, double gamma) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) K(i, j) = K(j, i) = rbf_kernel(X.row(i), X.row(j), gamma);
  }
  return K;
}

struct DualSolution {
  std::vector<double> alpha;
  double rho = 0;
  double gap = 0;
  std::size_t iterations = 0;
};

// Gradient of the dual objective 1/2 a'Qa - e'a.
std::vector<double> dual_gradient(const Eigen::MatrixXd& K, const std::vector<int>& y,
                                  const std::vector<double>& alpha) {
  const std::size_t n = y.size();
  std::vector<double> G(n, -1.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (alpha[j] == 0) continue;
    for (std::size_t t = 0; t < n; ++t) G[t] += y[t] * y[j] * K(t, j) * alpha[j];
  }
  return G;
}

// m(alpha) - M(alpha) over the index sets I_up / I_low.
double violating_gap(const std::vector<int>& y, const std::vector<double>& alpha,
                     const std::vector<double>& G, double C) {
  double m = -kInf, M = kInf;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double v = -y[t] * G[t];
    const bool up = (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0);
    const bool low = (y[t] == -1 && alpha[t] < C) || (y[t] == 1 && alpha[t] > 0);
    if (up) m = std::max(m, v);
    if (low) M = std::min(M, v);
  }
  if (m == -kInf || M == kInf) return 0.0;
  return std::max(0.0, m - M);
}

DualSolution solve_dual(const Eigen::MatrixXd& K, const std::vector<int>& y, double C,
                        const SvmOptions& options) {
  const std::size_t n = y.size();
  DualSolution s;
  s.alpha.assign(n, 0.0);
  std::vector<double>& a = s.alpha;
  std::vector<double> G(n, -1.0);
  auto upper = [&](std::size_t t) { return a[t] >= C; };
  auto lower = [&](std::size_t t) { return a[t] <= 0; };
  auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K(i, j); };

  for (;;) {
    // Maximal violating i, then j by second-order gain.
    double gmax = -kInf;
    std::ptrdiff_t i = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1 ? !upper(t) : !lower(t)) {
        const double v = -y[t] * G[t];
        if (v >= gmax) {
          gmax = v;
          i = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    double gmax2 = -kInf, best = kInf;
    std::ptrdiff_t j = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1 ? !lower(t) : !upper(t)) {
        const double v = y[t] * G[t];
        gmax2 = std::max(gmax2, v);
        const double diff = gmax + v;
        if (i >= 0 && diff > 0) {
          const auto ii = static_cast<std::size_t>(i);
          double quad = K(ii, ii) + K(t, t) - 2.0 * K(ii, t);
          if (quad <= 0) quad = kTau;
          const double gain = -(diff * diff) / quad;
          if (gain <= best) {
            best = gain;
            j = static_cast<std::ptrdiff_t>(t);
          }
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < options.tolerance) break;
    if (++s.iterations > options.max_iterations) {
      throw NumericError("SMO did not reach tolerance " + std::to_string(options.tolerance) +
                         " within " + std::to_string(options.max_iterations) + " iterations");
    }

    const auto ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
    const double old_i = a[ii], old_j = a[jj];
    if (y[ii] != y[jj]) {
      double quad = Q(ii, ii) + Q(jj, jj) + 2 * Q(ii, jj);
      if (quad <= 0) quad = kTau;
      const double delta = (-G[ii] - G[jj]) / quad;
      const double diff = a[ii] - a[jj];
      a[ii] += delta;
      a[jj] += delta;
      if (diff > 0) {
        if (a[jj] < 0) { a[jj] = 0; a[ii] = diff; }
      } else {
        if (a[ii] < 0) { a[ii] = 0; a[jj] = -diff; }
      }
      if (diff > 0) {
        if (a[ii] > C) { a[ii] = C; a[jj] = C - diff; }
      } else {
        if (a[jj] > C) { a[jj] = C; a[ii] = C + diff; }
      }
    } else {
      double quad = Q(ii, ii) + Q(jj, jj) - 2 * Q(ii, jj);
      if (quad <= 0) quad = kTau;
      const double delta = (G[ii] - G[jj]) / quad;
      const double sum = a[ii] + a[jj];
      a[ii] -= delta;
      a[jj] += delta;
      if (sum > C) {
        if (a[ii] > C) { a[ii] = C; a[jj] = sum - C; }
      } else {
        if (a[jj] < 0) { a[jj] = 0; a[ii] = sum; }
      }
      if (sum > C) {
        if (a[jj] > C) { a[jj] = C; a[ii] = sum - C; }
      } else {
        if (a[ii] < 0) { a[ii] = 0; a[jj] = sum; }
      }
    }
    const double di = a[ii] - old_i, dj = a[jj] - old_j;
    for (std::size_t t = 0; t < n; ++t) G[t] += Q(t, ii) * di + Q(t, jj) * dj;
  }

  double ub = kInf, lb = -kInf, sum_free = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  s.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2;
  s.gap = violating_gap(y, a, G, C);
  return s;
}

}  // namespace

double rbf_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                  const Eigen::Ref<const Eigen::RowVectorXd>& b, double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

double BinarySvm::decision(const Eigen::Ref<const Eigen::RowVectorXd>& x, double gamma) const {
  double f = 0;
  for (std::size_t i = 0; i < coef.size(); ++i) {
    f += coef[i] * rbf_kernel(support_vectors.row(static_cast<Eigen::Index>(i)), x, gamma);
  }
  return f - rho;
}

int SvmModel::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  std::map<int, std::size_t> votes;
  for (int c : classes) votes[c] = 0;
  for (const auto& m : machines) ++votes[m.decision(x, gamma) > 0 ? m.positive : m.negative];
  int best = classes.front();
  for (const auto& [label, count] : votes) {
    if (count > votes[best]) best = label;
  }
  return best;
}

std::vector<int> SvmModel::predict_all(const Eigen::MatrixXd& X) const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(predict(X.row(i)));
  return out;
}

double SvmModel::max_kkt_residual() const {
  double r = 0;
  for (const auto& m : machines) r = std::max(r, m.kkt_residual);
  return r;
}

SvmModel svm_train(const Eigen::MatrixXd& X, const std::vector<int>& y, double C, double gamma,
                   const SvmOptions& options) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw ConfigError("SVM got " + std::to_string(X.rows()) + " samples but " +
                      std::to_string(y.size()) + " labels");
  }
  if (!(C > 0) || !(gamma > 0)) throw ConfigError("SVM needs C > 0 and gamma > 0");
  if (!X.allFinite()) throw NumericError("SVM input contains non-finite values");
  SvmModel model;
  model.C = C;
  model.gamma = gamma;
  model.classes = y;
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) {
    throw ConfigError("SVM training needs at least two classes; the support set is degenerate");
  }

  const Eigen::MatrixXd K = kernel_matrix(X, gamma);
  for (std::size_t p = 0; p < model.classes.size(); ++p) {
    for (std::size_t q = p + 1; q < model.classes.size(); ++q) {
      BinarySvm m;
      m.positive = model.classes[p];
      m.negative = model.classes[q];
      std::vector<std::size_t> idx;
      std::vector<int> signs;
      for (std::size_t t = 0; t < y.size(); ++t) {
        if (y[t] == m.positive || y[t] == m.negative) {
          idx.push_back(t);
          signs.push_back(y[t] == m.positive ? 1 : -1);
        }
      }
      Eigen::MatrixXd Kp(idx.size(), idx.size());
      for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = 0; b < idx.size(); ++b) {
          Kp(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
              K(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b]));
        }
      }
      const DualSolution sol = solve_dual(Kp, signs, C, options);
      m.rho = sol.rho;
      m.kkt_residual = sol.gap;
      m.iterations = sol.iterations;
      for (std::size_t a = 0; a < idx.size(); ++a) {
        if (sol.alpha[a] > 0) {
          m.sv_indices.push_back(idx[a]);
          m.coef.push_back(sol.alpha[a] * signs[a]);
        }
      }
      m.support_vectors.resize(static_cast<Eigen::Index>(m.sv_indices.size()), X.cols());
      for (std::size_t a = 0; a < m.sv_indices.size(); ++a) {
        m.support_vectors.row(static_cast<Eigen::Index>(a)) = X.row(static_cast<Eigen::Index>(m.sv_indices[a]));
      }
      model.machines.push_back(std::move(m));
    }
  }
  return model;
}

double kkt_residual(const Eigen::MatrixXd& X, const std::vector<int>& signs,
                    const std::vector<double>& alpha, double C, double gamma) {
  const Eigen::MatrixXd K = kernel_matrix(X, gamma);
  return violating_gap(signs, alpha, dual_gradient(K, signs, alpha), C);
}

std::vector<std::size_t> stratified_folds(const std::vector<int>& y, std::size_t folds) {
  if (folds == 0) throw ConfigError("fold count must be positive");
  std::map<int, std::size_t> next;
  std::vector<std::size_t> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) out[t] = next[y[t]]++ % folds;
  return out;
}

GridSearchResult grid_search_C(const Eigen::MatrixXd& X, const std::vector<int>& y,
                               const std::vector<double>& grid, std::size_t folds, double gamma,
                               const SvmOptions& options) {
  if (grid.empty()) throw ConfigError("C grid is empty");
  if (folds < 2) throw ConfigError("grid search needs at least 2 folds");
  std::map<int, std::size_t> counts;
  for (int label : y) ++counts[label];
  if (counts.size() < 2) throw ConfigError("grid search needs at least two classes");
  std::size_t min_count = y.size();
  for (const auto& [label, c] : counts) min_count = std::min(min_count, c);
  if (min_count < 2) {
    throw ConfigError("every class needs at least 2 support samples for cross-validation");
  }

  GridSearchResult r;
  r.folds_used = folds;
  if (min_count < folds) {
    r.folds_used = min_count;
    r.warning = "reduced cross-validation folds from " + std::to_string(folds) + " to " +
                std::to_string(min_count) + " (smallest class has " + std::to_string(min_count) +
                " samples)";
  }
  const auto fold_of = stratified_folds(y, r.folds_used);

  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::size_t correct = 0;
    for (std::size_t f = 0; f < r.folds_used; ++f) {
      std::vector<Eigen::Index> train, test;
      for (std::size_t t = 0; t < y.size(); ++t) {
        (fold_of[t] == f ? test : train).push_back(static_cast<Eigen::Index>(t));
      }
      Eigen::MatrixXd Xtr = X(train, Eigen::all);
      std::vector<int> ytr;
      for (auto t : train) ytr.push_back(y[static_cast<std::size_t>(t)]);
      const SvmModel m = svm_train(Xtr, ytr, grid[g], gamma, options);
      for (auto t : test) correct += m.predict(X.row(t)) == y[static_cast<std::size_t>(t)];
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(y.size());
    r.accuracies.push_back(acc);
    if (g == 0 || acc > r.best_accuracy || (acc == r.best_accuracy && grid[g] < r.best_C)) {
      r.best_accuracy = acc;
      r.best_C = grid[g];
    }
  }
  return r;
}

}  // namespace graspfs
