#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/dgp.hpp"
#include "wtdl/dr_score.hpp"
#include "wtdl/errors.hpp"
#include "wtdl/lasso.hpp"
#include "wtdl/nodewise.hpp"
#include "wtdl/nuisance.hpp"

namespace wtdl {

using Interval = std::pair<double, double>;

struct WtdlEstimate {
  Vector b;           // debiased coefficients
  Vector beta_lasso;  // weighted Lasso coefficients
  Vector se;
  Matrix sigma_hat;   // W^T W / n
  std::vector<Interval> ci;
  double alpha = 0.05;
  double lambda = 0.0;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
};

inline void to_json(nlohmann::json& j, const WtdlEstimate& e) {
  const auto as_vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json ci = nlohmann::json::array();
  for (const auto& [lo, hi] : e.ci) ci.push_back({lo, hi});
  j = nlohmann::json{{"beta_lasso", as_vec(e.beta_lasso)},
                     {"b", as_vec(e.b)},
                     {"se", as_vec(e.se)},
                     {"ci", ci},
                     {"alpha", e.alpha},
                     {"lambda", e.lambda},
                     {"n", e.n},
                     {"p", e.p}};
}

/// b = beta + Theta W^T (q - W beta) / n.
inline Vector debias(const LassoFit& fit, const Matrix& theta, const WeightedProblem& wp) {
  const auto p = wp.w.cols();
  if (fit.beta.size() != p || theta.rows() != p || theta.cols() != p ||
      wp.q_wdml.size() != wp.w.rows()) {
    throw DomainError("debias: dimension mismatch");
  }
  const Vector score = wp.w.transpose() * (wp.q_wdml - wp.w * fit.beta) /
                       static_cast<double>(wp.w.rows());
  return fit.beta + theta * score;
}

inline Vector debias(const LassoFit& fit, const NodewiseInverse& inv, const WeightedProblem& wp) {
  return debias(fit, inv.theta, wp);
}

/// The same estimator written through the stationarity condition:
/// b = beta + Theta lambda kappa.
inline Vector debias_kkt_form(const LassoFit& fit, const Matrix& theta) {
  return fit.beta + fit.lambda * (theta * fit.kkt_subgradient);
}

/// se_j = sqrt(theta_j Sigma theta_j^T / n), theta_j the j-th row.
inline Vector standard_errors(const Matrix& theta, const Matrix& sigma_hat, Eigen::Index n) {
  if (theta.cols() != sigma_hat.rows() || sigma_hat.rows() != sigma_hat.cols()) {
    throw DomainError("standard_errors: dimension mismatch");
  }
  const Matrix ts = theta * sigma_hat;
  Vector se(theta.rows());
  for (Eigen::Index j = 0; j < theta.rows(); ++j) {
    const double quad = ts.row(j).dot(theta.row(j));
    if (!(quad > 0.0) || !std::isfinite(quad)) {
      throw NumericalError("degenerate variance for coefficient " + std::to_string(j));
    }
    se(j) = std::sqrt(quad / static_cast<double>(n));
  }
  return se;
}

inline Vector standard_errors(const NodewiseInverse& inv, const Matrix& sigma_hat, Eigen::Index n) {
  return standard_errors(inv.theta, sigma_hat, n);
}

/// Standard normal quantile, Wichura's AS241 (PPND16) rational
/// approximation; relative accuracy about 1e-16.
inline double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("normal_quantile: probability must lie in (0, 1)");
  const double q = prob - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0 ? prob : 1.0 - prob;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

/// b_j -/+ z_{1 - alpha/2} se_j.
inline std::vector<Interval> confidence_intervals(const Vector& b, const Vector& se, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("confidence_intervals: alpha must lie in (0, 1)");
  if (b.size() != se.size()) throw DomainError("confidence_intervals: dimension mismatch");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  std::vector<Interval> ci(static_cast<std::size_t>(b.size()));
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    ci[static_cast<std::size_t>(j)] = {b(j) - z * se(j), b(j) + z * se(j)};
  }
  return ci;
}

/// Knobs shared by the feasible, oracle and baseline estimators downstream
/// of the pseudo-outcomes.
struct InferenceSettings {
  LambdaSettings lambda;               // main Lasso penalty rule
  std::optional<double> fixed_lambda;  // overrides the rule when set
  LambdaSettings nodewise;             // per-column nodewise rule
  double alpha = 0.05;
  LassoOptions lasso;
};

/// Everything produced after the pseudo-outcomes and weights are known.
struct WtdlResult {
  WeightedProblem problem;
  LassoFit fit;
  NodewiseInverse inverse;
  WtdlEstimate estimate;
};

inline double choose_lambda(const WeightedProblem& wp, const InferenceSettings& s) {
  if (s.fixed_lambda) return *s.fixed_lambda;
  return select_lambda(wp.w, wp.q_wdml, s.lambda);
}

/// Weighted Lasso, nodewise inverse, debiasing and intervals for a given
/// pseudo-outcome vector and weights.
inline WtdlResult debiased_lasso(const ObservationSet& obs, const Vector& q_dml,
                                 const Vector& sigma, const InferenceSettings& s) {
  WtdlResult out;
  out.problem = build_weighted(obs, q_dml, sigma);
  const auto& wp = out.problem;
  const double lambda = choose_lambda(wp, s);
  out.fit = fit_lasso(wp.w, wp.q_wdml, lambda, s.lasso);
  if (!out.fit.converged) {
    throw NumericalError("weighted Lasso did not converge in " + std::to_string(s.lasso.max_iter) +
                         " sweeps");
  }
  out.inverse = build_theta(wp.w, s.nodewise);

  auto& est = out.estimate;
  est.n = obs.n();
  est.p = obs.p();
  est.alpha = s.alpha;
  est.lambda = lambda;
  est.beta_lasso = out.fit.beta;
  est.sigma_hat = wp.w.transpose() * wp.w / static_cast<double>(obs.n());
  est.b = debias(out.fit, out.inverse, wp);
  est.se = standard_errors(out.inverse, est.sigma_hat, obs.n());
  est.ci = confidence_intervals(est.b, est.se, s.alpha);
  return out;
}

/// Q(Y_i, D_i, X_i; mu0, pi0) for every row, with the generating nuisances.
inline Vector oracle_pseudo_outcomes(const ObservationSet& obs, const GroundTruth& gt) {
  const auto truth = true_nuisances(gt);
  Vector q(obs.n());
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    q(i) = dr_score(obs.y(i), obs.d(i), obs.x.row(i).transpose(), truth.mu, truth.propensity);
  }
  return q;
}

/// sqrt(sd1^2 / pi0(1|x_i) + sd0^2 / pi0(0|x_i)).
inline Vector oracle_sigma(const ObservationSet& obs, const GroundTruth& gt) {
  Vector sigma(obs.n());
  const double v1 = gt.noise_sd1 * gt.noise_sd1;
  const double v0 = gt.noise_sd0 * gt.noise_sd0;
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    const double pi1 = gt.propensity.treated(obs.x.row(i).transpose());
    sigma(i) = std::sqrt(v1 / pi1 + v0 / (1.0 - pi1));
  }
  return sigma;
}

/// Infeasible benchmark: the pipeline run on pseudo-outcomes and weights
/// built from the true nuisances and noise variances, without sample
/// splitting.
inline WtdlResult oracle_estimator(const ObservationSet& obs, const GroundTruth& gt,
                                   const InferenceSettings& s) {
  require_valid(obs);
  if (gt.beta0.size() != obs.p()) throw DomainError("oracle_estimator: ground truth dimension mismatch");
  return debiased_lasso(obs, oracle_pseudo_outcomes(obs, gt), oracle_sigma(obs, gt), s);
}

/// Baseline without cross-fitting: nuisances from `full_fit` (trained on all
/// rows) score every row. Only the Lasso fit is returned; no intervals are
/// offered for this estimator. `sigma_override` replaces the residual-based
/// weights when given.
inline LassoFit dr_catelasso_no_crossfit(const ObservationSet& obs, const NuisanceFit& full_fit,
                                         const InferenceSettings& s, WeightMode mode,
                                         double weight_floor,
                                         const Vector* sigma_override = nullptr) {
  require_valid(obs);
  const FoldAssignment single{1, std::vector<int>(static_cast<std::size_t>(obs.n()), 0)};
  std::vector<NuisanceFit> fits{full_fit};
  fits.front().fold = 0;
  const Vector q = build_pseudo_outcomes(obs, single, fits);
  const Vector sigma =
      sigma_override ? *sigma_override : estimate_weights(obs, single, fits, mode, weight_floor);
  const auto wp = build_weighted(obs, q, sigma);
  return fit_lasso(wp.w, wp.q_wdml, choose_lambda(wp, s), s.lasso);
}

/// Simulation-only quantities that need the true parameters.
struct InferenceDiagnostics {
  double delta_norm = 0.0;    // || sqrt(n) (Theta Sigma - I) (beta - beta0) ||_1
  double residual_gap = 0.0;  // sqrt(n) mean |(Q_hat_i - Q_bar_i) / sigma_i|
  double l1_error = 0.0;      // || beta - beta0 ||_1
  double pred_error = 0.0;    // || W (beta - beta0) ||^2 / n
};

/// The residual gap uses u_hat_i - u_bar_i = Q_hat_i - Q_bar_i: the
/// potential outcomes cancel in the difference.
inline InferenceDiagnostics diagnostics(const LassoFit& fit, const Matrix& theta,
                                        const WeightedProblem& wp, const ObservationSet& obs,
                                        const GroundTruth& gt) {
  const auto n = wp.w.rows();
  const double nn = static_cast<double>(n);
  const Vector err = fit.beta - gt.beta0;
  const Vector werr = wp.w * err;
  InferenceDiagnostics d;
  d.l1_error = err.lpNorm<1>();
  d.pred_error = werr.squaredNorm() / nn;
  const Vector sigma_err = wp.w.transpose() * werr / nn;  // Sigma_hat (beta - beta0)
  d.delta_norm = std::sqrt(nn) * (theta * sigma_err - err).lpNorm<1>();
  const Vector q_bar = oracle_pseudo_outcomes(obs, gt);
  d.residual_gap = std::sqrt(nn) * ((wp.q_dml - q_bar).array() / wp.sigma.array()).abs().mean();
  return d;
}

inline InferenceDiagnostics diagnostics(const LassoFit& fit, const NodewiseInverse& inv,
                                        const WeightedProblem& wp, const ObservationSet& obs,
                                        const GroundTruth& gt) {
  return diagnostics(fit, inv.theta, wp, obs, gt);
}

/// Smallest and largest eigenvalue of a symmetric matrix.
inline std::pair<double, double> eigenvalue_range(const Matrix& sigma_hat) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_hat, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

struct CompatibilityAudit {
  double value = 0.0;  // grid minimum; never below the true infimum
  double slack = 0.0;  // true infimum >= value - slack
  std::size_t grid_points = 0;
};

namespace detail {

/// Euclidean projection onto { u : ||u||_1 <= radius }.
inline Vector project_l1_ball(const Vector& v, double radius) {
  if (v.lpNorm<1>() <= radius) return v;
  std::vector<double> mags(static_cast<std::size_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) mags[static_cast<std::size_t>(k)] = std::abs(v(k));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumulative += mags[k];
    const double t = (cumulative - radius) / static_cast<double>(k + 1);
    if (mags[k] > t) theta = t;
  }
  Vector out(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) out(k) = soft_threshold(v(k), theta);
  return out;
}

/// Enumerates points of the unit l1 sphere in `dim` dimensions whose
/// coordinates are multiples of 1/steps, up to a global sign.
inline void l1_sphere_grid(int dim, int steps, const std::function<void(const Vector&)>& visit) {
  Vector v = Vector::Zero(dim);
  std::vector<int> parts(static_cast<std::size_t>(dim), 0);
  std::function<void(int, int)> compose = [&](int k, int remaining) {
    if (k == dim - 1) {
      parts[static_cast<std::size_t>(k)] = remaining;
      // sign patterns over the nonzero parts; first nonzero part positive
      std::vector<int> nz;
      for (int c = 0; c < dim; ++c) {
        if (parts[static_cast<std::size_t>(c)] != 0) nz.push_back(c);
      }
      const auto patterns = std::size_t{1} << (nz.size() - 1);
      for (std::size_t mask = 0; mask < patterns; ++mask) {
        v.setZero();
        for (std::size_t t = 0; t < nz.size(); ++t) {
          const bool negative = t > 0 && ((mask >> (t - 1)) & 1U);
          const double mag = static_cast<double>(parts[static_cast<std::size_t>(nz[t])]) / steps;
          v(nz[t]) = negative ? -mag : mag;
        }
        visit(v);
      }
      return;
    }
    for (int a = 0; a <= remaining; ++a) {
      parts[static_cast<std::size_t>(k)] = a;
      compose(k + 1, remaining - a);
    }
  };
  compose(0, steps);
}

}  // namespace detail

/// Empirical compatibility constant
///   phi^2 = inf { s0 b^T Sigma b / ||b_S||_1^2 : ||b_{S^c}||_1 <= 3 ||b_S||_1 }
/// for small p. The ratio is scale-free, so ||b_S||_1 = 1: the S-block is
/// enumerated on a grid of the l1 sphere with spacing `resolution`, and for
/// each grid point the convex quadratic over the l1 ball of radius 3 in the
/// complement block is minimized by accelerated projected gradient.
inline CompatibilityAudit compatibility_constant(const Matrix& sigma_hat,
                                                 const IndexVector& active_set,
                                                 double resolution = 1e-3) {
  const auto p = sigma_hat.rows();
  if (p > 12) throw DomainError("compatibility_constant: audit limited to small p (p <= 12)");
  if (active_set.empty()) throw DomainError("compatibility_constant: active set must be non-empty");
  if (!(resolution > 0.0 && resolution <= 1.0)) {
    throw DomainError("compatibility_constant: resolution must lie in (0, 1]");
  }
  std::vector<bool> in_s(static_cast<std::size_t>(p), false);
  for (auto j : active_set) {
    if (j < 0 || j >= p) throw DomainError("compatibility_constant: active index out of range");
    in_s[static_cast<std::size_t>(j)] = true;
  }
  IndexVector comp;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!in_s[static_cast<std::size_t>(j)]) comp.push_back(j);
  }
  const auto s = static_cast<Eigen::Index>(active_set.size());
  const auto c = static_cast<Eigen::Index>(comp.size());
  Matrix a_ss(s, s), a_cs(c, s), a_cc(c, c);
  for (Eigen::Index r = 0; r < s; ++r) {
    for (Eigen::Index k = 0; k < s; ++k) a_ss(r, k) = sigma_hat(active_set[r], active_set[k]);
  }
  for (Eigen::Index r = 0; r < c; ++r) {
    for (Eigen::Index k = 0; k < s; ++k) a_cs(r, k) = sigma_hat(comp[r], active_set[k]);
    for (Eigen::Index k = 0; k < c; ++k) a_cc(r, k) = sigma_hat(comp[r], comp[k]);
  }
  double lipschitz = 0.0;
  if (c > 0) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(a_cc, Eigen::EigenvaluesOnly);
    lipschitz = 2.0 * std::max(es.eigenvalues().maxCoeff(), 0.0);
  }

  const int steps = static_cast<int>(std::ceil(1.0 / resolution));
  // points on the grid: C(steps + s - 1, s - 1) * 2^(s - 1), bounded above
  double points = std::pow(2.0, static_cast<double>(s - 1));
  for (Eigen::Index k = 1; k < s; ++k) points *= static_cast<double>(steps + k) / static_cast<double>(k);
  if (points > 5e7) {
    throw DomainError("compatibility_constant: grid too large; raise resolution or shrink the active set");
  }
  CompatibilityAudit audit;
  audit.value = std::numeric_limits<double>::infinity();
  Vector warm = Vector::Zero(c);
  detail::l1_sphere_grid(static_cast<int>(s), steps, [&](const Vector& v) {
    ++audit.grid_points;
    double quad = v.dot(a_ss * v);
    if (c > 0 && lipschitz > 0.0) {
      const Vector lin = a_cs * v;
      const auto objective = [&](const Vector& u) { return u.dot(a_cc * u) + 2.0 * u.dot(lin); };
      Vector u = warm, y = warm;
      double t = 1.0;
      double best = objective(u);
      Vector best_u = u;
      for (int it = 0; it < 5000; ++it) {
        const Vector grad = 2.0 * (a_cc * y + lin);
        const Vector next = detail::project_l1_ball(y - grad / lipschitz, 3.0);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - u);
        const double step = (next - u).lpNorm<Eigen::Infinity>();
        u = next;
        t = t_next;
        const double val = objective(u);
        if (val < best) {
          best = val;
          best_u = u;
        }
        if (step < 1e-13) break;
      }
      warm = best_u;
      quad += best;
    }
    audit.value = std::min(audit.value, static_cast<double>(s) * quad);
  });
  // Moving v by delta in l1 changes b^T Sigma b by at most
  // delta * max|Sigma| * (||v + v'||_1 + 2 ||u||_1) <= 8 delta max|Sigma|.
  const double delta = static_cast<double>(s) / steps;
  audit.slack = static_cast<double>(s) * 8.0 * delta * sigma_hat.cwiseAbs().maxCoeff();
  return audit;
}

}  // namespace wtdl
