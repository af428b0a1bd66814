#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/errors.hpp"
#include "wtdl/lasso.hpp"

namespace wtdl {

/// Approximate inverse of Sigma_hat = W^T W / n from p nodewise Lasso
/// regressions. Row j of theta is (e_j - gamma_j) / tau_sq_j, i.e.
/// theta = T^{-2} C with C_jj = 1 and C_jk = -gamma_jk.
struct NodewiseInverse {
  Matrix theta;
  Vector tau_sq;
  Matrix gamma;  // row j: coefficients of column j on the others; gamma(j, j) == 0
  Vector lambdas;
};

struct NodewiseColumn {
  Vector gamma;  // length p, entry j pinned to zero
  double tau_sq = 0.0;
};

/// Nodewise solver tolerance. Tighter than the main Lasso because the
/// coordinate-change stopping rule is divided by tau_sq_j downstream.
inline LassoOptions nodewise_options() {
  LassoOptions opt;
  opt.tol = 1e-10;
  opt.max_iter = 100000;
  return opt;
}

/// Regresses column j of w on the other columns:
///   gamma_j = argmin ||W_j - W_{-j} g||^2 / n + 2 lambda_j ||g||_1,
///   tau_sq_j = ||W_j - W_{-j} gamma_j||^2 / n + lambda_j ||gamma_j||_1.
/// Runs fit_lasso on the explicit submatrix.
inline NodewiseColumn nodewise_column(const Matrix& w, Eigen::Index j, double lambda_j,
                                      const LassoOptions& opt = nodewise_options()) {
  const auto n = w.rows();
  const auto p = w.cols();
  if (j < 0 || j >= p) throw DomainError("nodewise_column: column index out of range");
  const double nn = static_cast<double>(n);
  NodewiseColumn out;
  out.gamma = Vector::Zero(p);
  if (p == 1) {
    out.tau_sq = w.col(0).squaredNorm() / nn;
    return out;
  }
  Matrix others(n, p - 1);
  others << w.leftCols(j), w.rightCols(p - j - 1);
  const Vector target = w.col(j);
  const auto fit = fit_lasso(others, target, lambda_j, opt);
  out.gamma.head(j) = fit.beta.head(j);
  out.gamma.tail(p - j - 1) = fit.beta.tail(p - j - 1);
  out.tau_sq =
      (target - others * fit.beta).squaredNorm() / nn + lambda_j * fit.beta.lpNorm<1>();
  return out;
}

/// Same regression on the Gram matrix of w (see fit_lasso_gram).
inline NodewiseColumn nodewise_column_gram(const Matrix& gram, Eigen::Index j, double lambda_j,
                                           const LassoOptions& opt = nodewise_options()) {
  const auto p = gram.rows();
  NodewiseColumn out;
  if (p == 1) {
    out.gamma = Vector::Zero(1);
    out.tau_sq = gram(0, 0);
    return out;
  }
  auto res = fit_lasso_gram(gram, gram.col(j), lambda_j, opt, j);
  out.gamma = std::move(res.beta);
  // ||W_j - W g||^2 / n = G_jj - 2 g^T G_{.j} + g^T G g
  const double rss = gram(j, j) - 2.0 * out.gamma.dot(gram.col(j)) +
                     out.gamma.dot(gram * out.gamma);
  out.tau_sq = std::max(rss, 0.0) + lambda_j * out.gamma.lpNorm<1>();
  return out;
}

/// Penalty for the regression of column j: the main-Lasso rule applied to
/// (W_{-j}, W_j). The theory rule uses log(p) of the full design so that it
/// stays positive for p = 2, and the column scale of W_{-j}.
inline double select_nodewise_lambda(const Matrix& w, Eigen::Index j,
                                     const LambdaSettings& settings) {
  const auto p = w.cols();
  if (j < 0 || j >= p) throw DomainError("select_nodewise_lambda: column index out of range");
  if (p == 1) return 0.0;
  const Vector target = w.col(j);
  const double sd = population_sd(target);
  if (settings.method == LambdaMethod::theory && sd > 0.0) {
    const double others_scale = std::sqrt((w.squaredNorm() - target.squaredNorm()) /
                                          static_cast<double>(w.rows() * (p - 1)));
    return theory_lambda(static_cast<double>(p), static_cast<double>(w.rows()), sd,
                         settings.constant, others_scale);
  }
  Matrix others(w.rows(), p - 1);
  others << w.leftCols(j), w.rightCols(p - j - 1);
  LambdaSettings column_settings = settings;
  column_settings.seed = derive_seed(settings.seed, static_cast<std::uint64_t>(j));
  return select_lambda(others, target, column_settings);
}

inline constexpr double kTauFloor = 1e-10;

/// Assembles theta from per-column penalties `lambdas`.
inline NodewiseInverse build_theta(const Matrix& w, const Vector& lambdas,
                                   const LassoOptions& opt = nodewise_options()) {
  const auto p = w.cols();
  if (lambdas.size() != p) throw DomainError("build_theta: need one penalty per column");
  if (p > 1 && (lambdas.array() <= 0.0).any()) {
    throw DomainError("build_theta: nodewise penalties must be positive");
  }
  const Matrix gram = w.transpose() * w / static_cast<double>(w.rows());
  NodewiseInverse out;
  out.theta = Matrix::Zero(p, p);
  out.gamma = Matrix::Zero(p, p);
  out.tau_sq = Vector::Zero(p);
  out.lambdas = lambdas;
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto col = nodewise_column_gram(gram, j, lambdas(j), opt);
    if (!(col.tau_sq > kTauFloor)) {
      throw NumericalError("collinear design at column " + std::to_string(j));
    }
    out.tau_sq(j) = col.tau_sq;
    out.gamma.row(j) = col.gamma.transpose();
    out.theta.row(j) = -col.gamma.transpose() / col.tau_sq;
    out.theta(j, j) = 1.0 / col.tau_sq;
  }
  return out;
}

/// Assembles theta with per-column penalties chosen by `rule`.
inline NodewiseInverse build_theta(const Matrix& w, const LambdaSettings& rule,
                                   const LassoOptions& opt = nodewise_options()) {
  Vector lambdas(w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j) lambdas(j) = select_nodewise_lambda(w, j, rule);
  return build_theta(w, lambdas, opt);
}

/// max_k |(Sigma_hat theta_j^T - e_j)_k| for every row j. Each entry is
/// bounded by lambda_j / tau_sq_j at an exact nodewise solution.
inline Vector approximate_inverse_error(const NodewiseInverse& inv, const Matrix& sigma_hat) {
  const auto p = sigma_hat.rows();
  const Matrix prod = sigma_hat * inv.theta.transpose();  // column j = Sigma theta_j^T
  Vector out(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Vector col = prod.col(j);
    col(j) -= 1.0;
    out(j) = col.cwiseAbs().maxCoeff();
  }
  return out;
}

}  // namespace wtdl
