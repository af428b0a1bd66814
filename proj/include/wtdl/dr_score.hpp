#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/errors.hpp"
#include "wtdl/models.hpp"
#include "wtdl/nuisance.hpp"

namespace wtdl {

/// Doubly robust score from plugged-in nuisance values:
///   1[d=1](y - mu1)/pi1 - 1[d=0](y - mu0)/(1 - pi1) + mu1 - mu0.
inline double dr_score(double y, int d, double mu1, double mu0, double pi1) {
  if (!std::isfinite(mu1) || !std::isfinite(mu0) || !std::isfinite(pi1)) {
    throw NumericalError("dr_score: non-finite nuisance prediction");
  }
  const double augmentation = d == 1 ? (y - mu1) / pi1 : -(y - mu0) / (1.0 - pi1);
  return augmentation + mu1 - mu0;
}

template <typename Derived>
double dr_score(double y, int d, const Eigen::MatrixBase<Derived>& x, const OutcomeModels& mu,
                const LogisticModel& pi) {
  return dr_score(y, d, mu.treated.predict(x), mu.control.predict(x), pi.treated(x));
}

namespace detail {

inline void check_fits(const FoldAssignment& folds, const std::vector<NuisanceFit>& fits,
                       Eigen::Index n) {
  if (static_cast<Eigen::Index>(folds.fold_of.size()) != n) {
    throw DomainError("fold assignment length does not match n");
  }
  for (int f = 0; f < folds.m; ++f) {
    if (static_cast<std::size_t>(f) >= fits.size() || fits[static_cast<std::size_t>(f)].fold != f) {
      throw DomainError("missing nuisance fit for fold " + std::to_string(f));
    }
  }
}

}  // namespace detail

/// Q_i^DML: the score of row i under the models of its own fold, which were
/// trained without that fold.
inline Vector build_pseudo_outcomes(const ObservationSet& obs, const FoldAssignment& folds,
                                    const std::vector<NuisanceFit>& fits) {
  detail::check_fits(folds, fits, obs.n());
  Vector q(obs.n());
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    const auto& fit = fits[static_cast<std::size_t>(folds.fold_of[static_cast<std::size_t>(i)])];
    q(i) = dr_score(obs.y(i), obs.d(i), obs.x.row(i).transpose(), fit.mu, fit.propensity);
  }
  return q;
}

enum class WeightMode { constant_per_arm, covariate_dependent };

inline const char* to_string(WeightMode mode) {
  return mode == WeightMode::constant_per_arm ? "constant_per_arm" : "covariate_dependent";
}

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "constant_per_arm" || s == "constant") return WeightMode::constant_per_arm;
  if (s == "covariate_dependent" || s == "covariate") return WeightMode::covariate_dependent;
  throw DomainError("unknown weight mode '" + s + "'");
}

/// sigma_hat(x_i) = max(sqrt(s1(x_i)/pi(1|x_i) + s0(x_i)/pi(0|x_i)), floor),
/// where s_d is the out-of-fold residual variance of arm d: a per-arm
/// constant, or a ridge regression of squared residuals on x. The
/// regression for rows of fold k is trained outside fold k and its
/// predictions are floored at max(floor^2, 0.1 * arm mean). Propensities are
/// the clipped out-of-fold predictions.
inline Vector estimate_weights(const ObservationSet& obs, const FoldAssignment& folds,
                               const std::vector<NuisanceFit>& fits, WeightMode mode,
                               double floor, double variance_ridge = -1.0) {
  if (!(floor > 0.0)) throw DomainError("estimate_weights: floor must be > 0");
  detail::check_fits(folds, fits, obs.n());
  const auto n = obs.n();
  const auto fold_of = [&](Eigen::Index i) { return folds.fold_of[static_cast<std::size_t>(i)]; };
  const auto fit_of = [&](Eigen::Index i) -> const NuisanceFit& {
    return fits[static_cast<std::size_t>(fold_of(i))];
  };

  Vector sq_resid(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = obs.y(i) - fit_of(i).mu.predict(obs.d(i), obs.x.row(i).transpose());
    sq_resid(i) = r * r;
  }

  Vector arm_mean = Vector::Zero(2);
  for (int d = 0; d < 2; ++d) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (obs.d(i) == d) {
        sum += sq_resid(i);
        ++count;
      }
    }
    if (mode == WeightMode::covariate_dependent && count == 0) {
      throw DomainError("estimate_weights: arm " + std::to_string(d) + " absent");
    }
    arm_mean(d) = count ? sum / static_cast<double>(count) : 0.0;
  }

  // variance(d, i): the estimate of Var(eps(d) | X_i).
  Matrix variance(n, 2);
  for (int d = 0; d < 2; ++d) variance.col(d).setConstant(arm_mean(d));
  if (mode == WeightMode::covariate_dependent) {
    const double ridge =
        variance_ridge >= 0.0 ? variance_ridge : 1.0 / std::sqrt(static_cast<double>(n));
    for (int k = 0; k < folds.m; ++k) {
      for (int d = 0; d < 2; ++d) {
        IndexVector rows;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (obs.d(i) == d && (folds.m == 1 || fold_of(i) != k)) rows.push_back(i);
        }
        if (rows.empty()) continue;  // keep the arm mean
        Vector target(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) target(static_cast<Eigen::Index>(r)) = sq_resid(rows[r]);
        const auto model = detail::ridge_fit(detail::gather_rows(obs.x, rows), std::move(target), ridge);
        const double lower = std::max(floor * floor, 0.1 * arm_mean(d));
        for (Eigen::Index i = 0; i < n; ++i) {
          if (fold_of(i) == k) variance(i, d) = std::max(model.predict(obs.x.row(i).transpose()), lower);
        }
      }
    }
  }

  Vector sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi1 = fit_of(i).propensity.treated(obs.x.row(i).transpose());
    const double var = variance(i, 1) / pi1 + variance(i, 0) / (1.0 - pi1);
    sigma(i) = std::max(std::sqrt(var), floor);
  }
  return sigma;
}

/// Weighted regression problem: W = diag(1/sigma) X, q_wdml = q_dml / sigma.
struct WeightedProblem {
  Vector q_dml;
  Vector sigma;
  Matrix w;
  Vector q_wdml;
};

inline WeightedProblem build_weighted(const ObservationSet& obs, const Vector& q_dml,
                                      const Vector& sigma) {
  if (q_dml.size() != obs.n() || sigma.size() != obs.n()) {
    throw DomainError("build_weighted: q_dml and sigma must have length n");
  }
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (!(sigma(i) > 0.0) || !std::isfinite(sigma(i))) {
      throw DomainError("build_weighted: non-positive weight at row " + std::to_string(i));
    }
  }
  WeightedProblem wp;
  wp.q_dml = q_dml;
  wp.sigma = sigma;
  wp.w = obs.x.array().colwise() / sigma.array();
  wp.q_wdml = q_dml.cwiseQuotient(sigma);
  return wp;
}

}  // namespace wtdl
