#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/errors.hpp"
#include "wtdl/models.hpp"
#include "wtdl/rng.hpp"

namespace wtdl {

/// Partition of [0, n) into m folds; fold ids are 0-based.
struct FoldAssignment {
  int m = 2;
  std::vector<int> fold_of;

  [[nodiscard]] IndexVector rows_in(int fold) const {
    IndexVector rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] == fold) rows.push_back(static_cast<Eigen::Index>(i));
    }
    return rows;
  }

  /// The training rows of fold `fold`: everything outside it.
  [[nodiscard]] IndexVector rows_outside(int fold) const {
    IndexVector rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] != fold) rows.push_back(static_cast<Eigen::Index>(i));
    }
    return rows;
  }
};

inline FoldAssignment assign_folds(Eigen::Index n, int m, std::uint64_t seed) {
  if (m < 2) throw DomainError("assign_folds: need m >= 2 folds");
  if (n < 2 * static_cast<Eigen::Index>(m)) {
    throw DomainError("assign_folds: insufficient samples per fold (n=" + std::to_string(n) +
                      ", m=" + std::to_string(m) + ")");
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Explicit Fisher-Yates so the permutation does not depend on the
  // standard library's shuffle.
  for (std::size_t k = order.size(); k > 1; --k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::swap(order[k - 1], order[pick(rng)]);
  }
  FoldAssignment folds{m, std::vector<int>(order.size())};
  for (std::size_t k = 0; k < order.size(); ++k) {
    folds.fold_of[order[k]] = static_cast<int>(k % static_cast<std::size_t>(m));
  }
  return folds;
}

struct NuisanceSettings {
  std::optional<double> ridge_outcome;     // default 1/sqrt(n)
  std::optional<double> ridge_propensity;  // default 1/sqrt(n)
  double clip = 0.05;

  [[nodiscard]] double outcome_penalty(Eigen::Index n) const {
    return ridge_outcome.value_or(1.0 / std::sqrt(static_cast<double>(n)));
  }
  [[nodiscard]] double propensity_penalty(Eigen::Index n) const {
    return ridge_propensity.value_or(1.0 / std::sqrt(static_cast<double>(n)));
  }
};

namespace detail {

inline Matrix gather_rows(const Matrix& x, const IndexVector& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
  }
  return out;
}

/// Ridge least squares with unpenalized intercept (see fit_outcome).
inline LinearModel ridge_fit(Matrix xc, Vector yc, double ridge_penalty) {
  const auto n_arm = xc.rows();
  const auto p = xc.cols();
  const Eigen::RowVectorXd x_mean = xc.colwise().mean();
  const double y_mean = yc.mean();
  xc.rowwise() -= x_mean;
  yc.array() -= y_mean;

  Vector coef;
  const double nn = static_cast<double>(n_arm);
  if (ridge_penalty == 0.0) {
    coef = xc.completeOrthogonalDecomposition().solve(yc);
  } else if (p <= n_arm) {
    Matrix gram = xc.transpose() * xc / nn;
    gram.diagonal().array() += ridge_penalty;
    coef = gram.llt().solve(xc.transpose() * yc / nn);
  } else {
    Matrix kernel = xc * xc.transpose() / nn;
    kernel.diagonal().array() += ridge_penalty;
    coef = xc.transpose() * kernel.llt().solve(yc) / nn;
  }
  const double intercept = y_mean - x_mean.dot(coef);
  return LinearModel{intercept, std::move(coef)};
}

}  // namespace detail

/// Ridge least squares on the rows of `rows` with d == arm:
///   argmin (1/n_arm) ||y - b0 - X c||^2 + ridge_penalty ||c||^2,
/// intercept unpenalized. Solved in closed form through the primal normal
/// equations (p <= n_arm) or the dual n_arm x n_arm system (p > n_arm);
/// ridge_penalty == 0 gives the minimum-norm least-squares solution.
inline LinearModel fit_outcome(const ObservationSet& obs, const IndexVector& rows, int arm,
                               double ridge_penalty) {
  if (!(ridge_penalty >= 0.0)) throw DomainError("fit_outcome: ridge_penalty must be >= 0");
  IndexVector arm_rows;
  for (auto i : rows) {
    if (obs.d(i) == arm) arm_rows.push_back(i);
  }
  if (arm_rows.empty()) throw DomainError("empty arm in training fold (arm " + std::to_string(arm) + ")");

  Vector yc(static_cast<Eigen::Index>(arm_rows.size()));
  for (std::size_t k = 0; k < arm_rows.size(); ++k) {
    yc(static_cast<Eigen::Index>(k)) = obs.y(arm_rows[k]);
  }
  return detail::ridge_fit(detail::gather_rows(obs.x, arm_rows), std::move(yc), ridge_penalty);
}

struct PropensityDiagnostics {
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  double loss = 0.0;
};

namespace detail {

inline double logistic_loss(const Vector& eta, const Vector& target, const Vector& coef,
                            double ridge) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double t = eta(i);
    // log(1 + e^t) - d t, evaluated without overflow.
    nll += (t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t))) - target(i) * t;
  }
  return nll / static_cast<double>(eta.size()) + ridge * coef.squaredNorm();
}

/// Newton system [z0 X]^T V [z0 X] / n + diag(0, 2 ridge I) for weights
/// `v`, solved for right-hand side (g0, gc). Uses the n x n Woodbury form
/// when p exceeds n.
inline std::pair<double, Vector> solve_newton(const Matrix& x, const Vector& v, double ridge,
                                              double g0, const Vector& gc) {
  const auto n = x.rows();
  const auto p = x.cols();
  const double nn = static_cast<double>(n);
  const Vector s = (v.array() / nn).sqrt();
  const Matrix xt = s.asDiagonal() * x;  // weighted covariates
  const Vector& z0 = s;                  // weighted intercept column
  const double r = 2.0 * ridge;

  if (p + 1 <= n) {
    Matrix h(p + 1, p + 1);
    h(0, 0) = z0.squaredNorm();
    const Vector cross = xt.transpose() * z0;
    h.block(1, 0, p, 1) = cross;
    h.block(0, 1, 1, p) = cross.transpose();
    h.block(1, 1, p, p) = xt.transpose() * xt;
    h.diagonal().tail(p).array() += r;
    Vector rhs(p + 1);
    rhs(0) = g0;
    rhs.tail(p) = gc;
    const Vector sol = h.ldlt().solve(rhs);
    return {sol(0), sol.tail(p)};
  }

  // B = xt^T xt + r I;  B^{-1} u = (u - xt^T (xt xt^T + r I)^{-1} xt u) / r.
  Matrix k = xt * xt.transpose();
  k.diagonal().array() += r;
  const Eigen::LLT<Matrix> chol(k);
  const auto apply_binv = [&](const Vector& u) -> Vector {
    return (u - xt.transpose() * chol.solve(xt * u)) / r;
  };
  const Vector cross = xt.transpose() * z0;
  const Vector binv_gc = apply_binv(gc);
  const Vector binv_cross = apply_binv(cross);
  const double schur = z0.squaredNorm() - cross.dot(binv_cross);
  const double d0 = (g0 - cross.dot(binv_gc)) / schur;
  Vector dc = binv_gc - binv_cross * d0;
  return {d0, std::move(dc)};
}

}  // namespace detail

/// Ridge logistic regression for pi(1|x) on `rows`:
///   argmin (1/n) sum [log(1 + e^eta) - d eta] + ridge_penalty ||c||^2,
/// by Newton/IRLS with step halving, stopping at gradient norm <= 1e-8 or
/// after 100 iterations. Predictions are clipped to [clip, 1 - clip].
inline LogisticModel fit_propensity(const ObservationSet& obs, const IndexVector& rows,
                                    double ridge_penalty, double clip,
                                    PropensityDiagnostics* diag = nullptr) {
  if (!(ridge_penalty > 0.0)) throw DomainError("fit_propensity: ridge_penalty must be > 0");
  if (!(clip > 0.0 && clip < 0.5)) throw DomainError("fit_propensity: clip must lie in (0, 0.5)");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Matrix x = detail::gather_rows(obs.x, rows);
  Vector target(n);
  for (Eigen::Index k = 0; k < n; ++k) target(k) = obs.d(rows[static_cast<std::size_t>(k)]);
  const double treated = target.sum();
  if (treated == 0.0 || treated == static_cast<double>(n)) {
    throw DomainError("fit_propensity: training rows contain a single treatment arm");
  }

  constexpr int kMaxIter = 100;
  constexpr double kGradTol = 1e-8;
  const double nn = static_cast<double>(n);
  double b0 = 0.0;
  Vector coef = Vector::Zero(x.cols());
  Vector eta = Vector::Zero(n);
  double loss = detail::logistic_loss(eta, target, coef, ridge_penalty);
  PropensityDiagnostics info;

  for (int iter = 1; iter <= kMaxIter; ++iter) {
    Vector prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = logistic(eta(i));
      weight(i) = prob(i) * (1.0 - prob(i));
    }
    const Vector resid = prob - target;
    const double g0 = resid.sum() / nn;
    const Vector gc = x.transpose() * resid / nn + 2.0 * ridge_penalty * coef;
    info.gradient_norm = std::sqrt(g0 * g0 + gc.squaredNorm());
    if (info.gradient_norm <= kGradTol) {
      info.converged = true;
      break;
    }
    info.iterations = iter;

    auto [d0, dc] = detail::solve_newton(x, weight, ridge_penalty, g0, gc);
    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
      const double cand_b0 = b0 - step * d0;
      const Vector cand_coef = coef - step * dc;
      const Vector cand_eta = (x * cand_coef).array() + cand_b0;
      const double cand_loss = detail::logistic_loss(cand_eta, target, cand_coef, ridge_penalty);
      if (!std::isfinite(cand_loss) || !std::isfinite(cand_b0)) {
        throw NumericalError("fit_propensity: non-finite iterate at iteration " +
                             std::to_string(iter));
      }
      if (cand_loss <= loss) {
        b0 = cand_b0;
        coef = cand_coef;
        eta = cand_eta;
        loss = cand_loss;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no descent possible: at the optimum to rounding
  }
  info.loss = loss;
  if (diag != nullptr) *diag = info;
  return LogisticModel{b0, std::move(coef), clip};
}

struct NuisanceDiagnostics {
  Eigen::Index training_rows = 0;
  double mu1_train_mse = 0.0;
  double mu0_train_mse = 0.0;
  PropensityDiagnostics propensity;
};

/// Models for fold `fold`, trained on the complement of that fold.
struct NuisanceFit {
  int fold = 0;
  OutcomeModels mu;
  LogisticModel propensity;
  NuisanceDiagnostics diagnostics;
};

namespace detail {

inline double arm_mse(const ObservationSet& obs, const IndexVector& rows, int arm,
                      const LinearModel& model) {
  double sum = 0.0;
  std::size_t count = 0;
  for (auto i : rows) {
    if (obs.d(i) != arm) continue;
    const double r = obs.y(i) - model.predict(obs.x.row(i).transpose());
    sum += r * r;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

template <typename E>
[[noreturn]] void rethrow_with_context(const E& e, const std::string& context) {
  throw E(context + ": " + e.what());
}

}  // namespace detail

/// Fits both outcome models and the propensity model on `rows`.
inline NuisanceFit fit_nuisances(const ObservationSet& obs, const IndexVector& rows, int fold,
                                 const NuisanceSettings& settings) {
  const double ridge_mu = settings.outcome_penalty(obs.n());
  const double ridge_pi = settings.propensity_penalty(obs.n());
  NuisanceFit fit;
  fit.fold = fold;
  fit.mu.treated = fit_outcome(obs, rows, 1, ridge_mu);
  fit.mu.control = fit_outcome(obs, rows, 0, ridge_mu);
  fit.propensity =
      fit_propensity(obs, rows, ridge_pi, settings.clip, &fit.diagnostics.propensity);
  fit.diagnostics.training_rows = static_cast<Eigen::Index>(rows.size());
  fit.diagnostics.mu1_train_mse = detail::arm_mse(obs, rows, 1, fit.mu.treated);
  fit.diagnostics.mu0_train_mse = detail::arm_mse(obs, rows, 0, fit.mu.control);
  return fit;
}

/// One NuisanceFit per fold, each trained only on rows outside that fold.
inline std::vector<NuisanceFit> cross_fit(const ObservationSet& obs, const FoldAssignment& folds,
                                          const NuisanceSettings& settings) {
  if (static_cast<Eigen::Index>(folds.fold_of.size()) != obs.n()) {
    throw DomainError("cross_fit: fold assignment length does not match n");
  }
  std::vector<NuisanceFit> fits;
  fits.reserve(static_cast<std::size_t>(folds.m));
  for (int fold = 0; fold < folds.m; ++fold) {
    const std::string context = "fold " + std::to_string(fold);
    try {
      fits.push_back(fit_nuisances(obs, folds.rows_outside(fold), fold, settings));
    } catch (const DomainError& e) {
      detail::rethrow_with_context(e, context);
    } catch (const NumericalError& e) {
      detail::rethrow_with_context(e, context);
    }
  }
  return fits;
}

}  // namespace wtdl
