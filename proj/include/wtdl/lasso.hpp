#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/errors.hpp"
#include "wtdl/nuisance.hpp"

namespace wtdl {

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

struct LassoOptions {
  double tol = 1e-7;
  int max_iter = 10000;
  /// Solve on unit-variance columns and map back. Changes the penalty
  /// geometry, so it is off unless asked for.
  bool standardize = false;
};

/// Solution of  min ||y - X b||^2 / n + 2 lambda ||b||_1.
/// With this convention the stationarity condition reads
///   X^T (y - X b) / n = lambda * kappa,  kappa in sign(b).
struct LassoFit {
  Vector beta;
  double lambda = 0.0;
  Vector kkt_subgradient;  // X^T r / (n lambda); zero when lambda == 0
  int iterations = 0;      // coordinate sweeps, full or active-set
  bool converged = false;
  double objective = 0.0;
  std::vector<double> objective_path;  // objective after every sweep
};

namespace detail {

inline double lasso_objective(const Vector& resid, const Vector& beta, double lambda) {
  return resid.squaredNorm() / static_cast<double>(resid.size()) +
         2.0 * lambda * beta.lpNorm<1>();
}

/// Cyclic coordinate descent on the residual. Alternates full sweeps with
/// sweeps over the current support; convergence is only declared on a full
/// sweep whose largest coordinate change is <= tol.
inline LassoFit coordinate_descent(const Matrix& x, const Vector& y, double lambda,
                                   const LassoOptions& opt, const Vector* warm_start) {
  const auto n = x.rows();
  const auto p = x.cols();
  const double nn = static_cast<double>(n);
  Vector scale = x.colwise().squaredNorm().transpose() / nn;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (scale(j) == 0.0 && lambda == 0.0) {
      throw NumericalError("degenerate column " + std::to_string(j) + " with lambda = 0");
    }
  }

  LassoFit fit;
  fit.lambda = lambda;
  fit.beta = warm_start ? *warm_start : Vector::Zero(p);
  Vector resid = y - x * fit.beta;

  const auto update = [&](Eigen::Index j) {
    if (scale(j) == 0.0) return 0.0;
    const double old = fit.beta(j);
    const double z = x.col(j).dot(resid) / nn + scale(j) * old;
    const double next = soft_threshold(z, lambda) / scale(j);
    const double delta = next - old;
    if (delta != 0.0) {
      resid.noalias() -= delta * x.col(j);
      fit.beta(j) = next;
    }
    return std::abs(delta);
  };

  std::vector<Eigen::Index> support;
  while (fit.iterations < opt.max_iter) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) max_change = std::max(max_change, update(j));
    ++fit.iterations;
    fit.objective_path.push_back(lasso_objective(resid, fit.beta, lambda));
    if (max_change <= opt.tol) {
      fit.converged = true;
      break;
    }
    support.clear();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (fit.beta(j) != 0.0) support.push_back(j);
    }
    while (fit.iterations < opt.max_iter) {
      double inner_change = 0.0;
      for (auto j : support) inner_change = std::max(inner_change, update(j));
      ++fit.iterations;
      fit.objective_path.push_back(lasso_objective(resid, fit.beta, lambda));
      if (inner_change <= opt.tol) break;
    }
  }

  resid = y - x * fit.beta;
  fit.objective = lasso_objective(resid, fit.beta, lambda);
  fit.kkt_subgradient =
      lambda > 0.0 ? Vector(x.transpose() * resid / (nn * lambda)) : Vector(Vector::Zero(p));
  return fit;
}

}  // namespace detail

/// Weighted-Lasso solver: cyclic coordinate descent from zero.
/// Returns converged == false when max_iter sweeps were not enough.
inline LassoFit fit_lasso(const Matrix& design, const Vector& response, double lambda,
                          const LassoOptions& opt = {}) {
  if (design.rows() != response.size()) {
    throw DomainError("fit_lasso: design has " + std::to_string(design.rows()) +
                      " rows but response has length " + std::to_string(response.size()));
  }
  if (!(lambda >= 0.0)) throw DomainError("fit_lasso: lambda must be >= 0");
  if (!(opt.tol > 0.0)) throw DomainError("fit_lasso: tol must be > 0");
  if (!opt.standardize) return detail::coordinate_descent(design, response, lambda, opt, nullptr);

  const double nn = static_cast<double>(design.rows());
  Vector col_scale = (design.colwise().squaredNorm().transpose() / nn).cwiseSqrt();
  for (Eigen::Index j = 0; j < col_scale.size(); ++j) {
    if (col_scale(j) == 0.0) col_scale(j) = 1.0;
  }
  const Matrix scaled = design * col_scale.cwiseInverse().asDiagonal();
  LassoFit fit = detail::coordinate_descent(scaled, response, lambda, opt, nullptr);
  fit.beta = fit.beta.cwiseQuotient(col_scale);
  const Vector resid = response - design * fit.beta;
  fit.kkt_subgradient = lambda > 0.0 ? Vector(design.transpose() * resid / (nn * lambda))
                                     : Vector(Vector::Zero(design.cols()));
  return fit;
}

struct KktViolation {
  double inactive = 0.0;  // max over beta_j == 0 of (|g_j| - lambda)_+
  double active = 0.0;    // max over beta_j != 0 of |g_j - lambda sign(beta_j)|
};

/// Stationarity residuals of `fit` recomputed from scratch with
/// g = X^T (y - X beta) / n.
inline KktViolation kkt_check(const LassoFit& fit, const Matrix& design, const Vector& response) {
  const Vector g =
      design.transpose() * (response - design * fit.beta) / static_cast<double>(design.rows());
  KktViolation v;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double b = fit.beta(j);
    if (b == 0.0) {
      v.inactive = std::max(v.inactive, std::abs(g(j)) - fit.lambda);
    } else {
      v.active = std::max(v.active, std::abs(g(j) - fit.lambda * (b > 0 ? 1.0 : -1.0)));
    }
  }
  return v;
}

/// Lasso on sufficient statistics: minimizes
///   b^T G b - 2 c^T b + 2 lambda ||b||_1
/// with G = X^T X / n and c = X^T y / n, which equals the residual-form
/// objective up to the constant ||y||^2 / n. Coordinate `excluded` (if >= 0)
/// is pinned at zero, so a nodewise regression of column j on the others can
/// run directly on the full Gram matrix.
struct GramLassoResult {
  Vector beta;
  int iterations = 0;
  bool converged = false;
};

inline GramLassoResult fit_lasso_gram(const Matrix& gram, const Vector& cross, double lambda,
                                      const LassoOptions& opt = {},
                                      Eigen::Index excluded = -1) {
  const auto p = gram.rows();
  if (gram.cols() != p || cross.size() != p) throw DomainError("fit_lasso_gram: dimension mismatch");
  GramLassoResult out;
  out.beta = Vector::Zero(p);
  Vector grad = cross;  // c - G b

  const auto update = [&](Eigen::Index j) {
    const double gjj = gram(j, j);
    if (j == excluded || gjj == 0.0) return 0.0;
    const double old = out.beta(j);
    const double next = soft_threshold(grad(j) + gjj * old, lambda) / gjj;
    const double delta = next - old;
    if (delta != 0.0) {
      grad.noalias() -= delta * gram.col(j);
      out.beta(j) = next;
    }
    return std::abs(delta);
  };

  std::vector<Eigen::Index> support;
  while (out.iterations < opt.max_iter) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) max_change = std::max(max_change, update(j));
    ++out.iterations;
    if (max_change <= opt.tol) {
      out.converged = true;
      break;
    }
    support.clear();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (out.beta(j) != 0.0) support.push_back(j);
    }
    while (out.iterations < opt.max_iter) {
      double inner_change = 0.0;
      for (auto j : support) inner_change = std::max(inner_change, update(j));
      ++out.iterations;
      if (inner_change <= opt.tol) break;
    }
  }
  return out;
}

enum class LambdaMethod { theory, cv };

inline const char* to_string(LambdaMethod m) { return m == LambdaMethod::theory ? "theory" : "cv"; }

inline LambdaMethod parse_lambda_method(const std::string& s) {
  if (s == "theory") return LambdaMethod::theory;
  if (s == "cv") return LambdaMethod::cv;
  throw DomainError("unknown lambda method '" + s + "'");
}

struct LambdaSettings {
  LambdaMethod method = LambdaMethod::theory;
  double constant = 1.0;
  int cv_folds = 5;
  int grid_size = 50;
  std::uint64_t seed = 0;
};

/// constant * sqrt(log(p) / n) * response_sd.
inline double theory_lambda(double p, double n, double response_sd, double constant = 1.0,
                            double design_scale = 1.0) {
  return constant * std::sqrt(std::log(p) / n) * response_sd * design_scale;
}

/// Root mean square of the column norms ||X_j|| / sqrt(n). Equals 1 for a
/// design with unit-scale columns.
inline double design_scale(const Matrix& design) {
  if (design.size() == 0) return 0.0;
  return std::sqrt(design.squaredNorm() / static_cast<double>(design.size()));
}

/// ||X^T y / n||_inf: the smallest penalty with an all-zero solution.
inline double lambda_max(const Matrix& design, const Vector& response) {
  return (design.transpose() * response).cwiseAbs().maxCoeff() /
         static_cast<double>(design.rows());
}

/// Geometric grid of `size` values from lambda_max down to 1e-3 lambda_max.
inline std::vector<double> lambda_grid(double lmax, int size) {
  std::vector<double> grid(static_cast<std::size_t>(size));
  for (int k = 0; k < size; ++k) {
    const double t = size == 1 ? 0.0 : static_cast<double>(k) / (size - 1);
    grid[static_cast<std::size_t>(k)] = lmax * std::pow(1e-3, t);
  }
  return grid;
}

inline double population_sd(const Vector& v) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().mean());
}

/// Cross-validated mean squared prediction error for each grid value.
inline std::vector<double> cv_curve(const Matrix& design, const Vector& response,
                                    const std::vector<double>& grid, int folds,
                                    std::uint64_t seed, const LassoOptions& opt = {}) {
  const auto assignment = assign_folds(design.rows(), folds, seed);
  std::vector<double> sse(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    const auto train = assignment.rows_outside(f);
    const auto test = assignment.rows_in(f);
    const Matrix x_train = detail::gather_rows(design, train);
    const Matrix x_test = detail::gather_rows(design, test);
    Vector y_train(static_cast<Eigen::Index>(train.size()));
    Vector y_test(static_cast<Eigen::Index>(test.size()));
    for (std::size_t k = 0; k < train.size(); ++k) y_train(static_cast<Eigen::Index>(k)) = response(train[k]);
    for (std::size_t k = 0; k < test.size(); ++k) y_test(static_cast<Eigen::Index>(k)) = response(test[k]);
    Vector warm = Vector::Zero(design.cols());
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto fit = detail::coordinate_descent(x_train, y_train, grid[g], opt, &warm);
      warm = fit.beta;
      sse[g] += (y_test - x_test * fit.beta).squaredNorm();
    }
  }
  for (auto& v : sse) v /= static_cast<double>(design.rows());
  return sse;
}

/// Penalty level for fit_lasso. `theory`: theory_lambda with the empirical
/// (population) SD of the response and the design's column scale, so that
/// rescaling rows or columns rescales the penalty with the gradient. `cv`: minimizer of K-fold prediction
/// error over lambda_grid(lambda_max, grid_size); ties go to the larger
/// penalty. A constant response yields lambda_max.
inline double select_lambda(const Matrix& design, const Vector& response,
                            const LambdaSettings& settings) {
  if (design.rows() != response.size()) throw DomainError("select_lambda: dimension mismatch");
  const double lmax = lambda_max(design, response);
  const double sd = population_sd(response);
  if (sd == 0.0) return lmax;
  if (settings.method == LambdaMethod::theory) {
    return theory_lambda(static_cast<double>(design.cols()), static_cast<double>(design.rows()),
                         sd, settings.constant, design_scale(design));
  }
  if (settings.cv_folds < 2) throw DomainError("select_lambda: cv needs at least 2 folds");
  if (lmax == 0.0) return 0.0;
  const auto grid = lambda_grid(lmax, settings.grid_size);
  const auto curve = cv_curve(design, response, grid, settings.cv_folds, settings.seed);
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (curve[g] < curve[best]) best = g;
  }
  return grid[best];
}

}  // namespace wtdl
