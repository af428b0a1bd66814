#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/errors.hpp"
#include "wtdl/models.hpp"
#include "wtdl/rng.hpp"

namespace wtdl {

/// Parameters of the synthetic design:
///   X ~ N(0, R) with R_jk = rho^|j-k|,
///   mu(0)(x) = x^T c0 (dense, |c0_j| = outcome_dense_scale / sqrt(p)),
///   mu(1)(x) = mu(0)(x) + x^T beta0,
///   pi(1|x)  = clip(logistic(propensity_strength * x^T a), clip, 1 - clip),
///   Y(d)     = mu(d)(X) + N(0, noise_sd_d^2).
/// beta0 holds beta_values at indices 0..s0-1 and zeros elsewhere; `a` is the
/// unit vector spread evenly over the first min(p, 10) covariates.
struct DgpConfig {
  std::int64_t n = 400;
  std::int64_t p = 600;
  std::int64_t s0 = 5;
  std::vector<double> beta_values{3.0, 2.0, 1.5, 1.0, 0.5};
  double covariate_correlation = 0.3;
  double propensity_strength = 0.0;
  double propensity_clip = 0.1;
  double outcome_dense_scale = 1.0;
  double noise_sd1 = 1.0;
  double noise_sd0 = 1.0;
  std::uint64_t seed = 0;
};

inline constexpr std::int64_t kPropensitySupport = 10;

inline void validate(const DgpConfig& c) {
  std::vector<std::string> bad;
  if (c.n < 1) bad.emplace_back("n must be positive");
  if (c.p < 1) bad.emplace_back("p must be positive");
  if (c.s0 < 0 || c.s0 > c.p) bad.emplace_back("s0 must lie in [0, p]");
  if (static_cast<std::int64_t>(c.beta_values.size()) != c.s0) {
    bad.emplace_back("beta_values must have length s0");
  }
  for (double b : c.beta_values) {
    if (b == 0.0 || !std::isfinite(b)) {
      bad.emplace_back("beta_values must be finite and nonzero");
      break;
    }
  }
  if (!(c.covariate_correlation >= 0.0 && c.covariate_correlation < 1.0)) {
    bad.emplace_back("covariate_correlation must lie in [0, 1)");
  }
  if (!(c.propensity_strength >= 0.0)) bad.emplace_back("propensity_strength must be >= 0");
  if (!(c.propensity_clip > 0.0 && c.propensity_clip < 0.5)) {
    bad.emplace_back("propensity_clip must lie in (0, 0.5)");
  }
  if (!(c.outcome_dense_scale >= 0.0)) bad.emplace_back("outcome_dense_scale must be >= 0");
  if (!(c.noise_sd1 > 0.0) || !(c.noise_sd0 > 0.0)) bad.emplace_back("noise SDs must be positive");
  if (bad.empty()) return;
  std::string msg = "invalid dgp config:";
  for (const auto& b : bad) msg += " " + b + ";";
  throw DomainError(msg);
}

inline void to_json(nlohmann::json& j, const DgpConfig& c) {
  j = nlohmann::json{{"n", c.n},
                     {"p", c.p},
                     {"s0", c.s0},
                     {"beta_values", c.beta_values},
                     {"covariate_correlation", c.covariate_correlation},
                     {"propensity_strength", c.propensity_strength},
                     {"propensity_clip", c.propensity_clip},
                     {"outcome_dense_scale", c.outcome_dense_scale},
                     {"noise_sd1", c.noise_sd1},
                     {"noise_sd0", c.noise_sd0},
                     {"seed", c.seed}};
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& what) {
  if (!j.is_object()) throw FormatError(what + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw FormatError("unknown key '" + item.key() + "' in " + what);
    }
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, DgpConfig& c) {
  detail::reject_unknown_keys(
      j,
      {"n", "p", "s0", "beta_values", "covariate_correlation", "propensity_strength",
       "propensity_clip", "outcome_dense_scale", "noise_sd1", "noise_sd0", "seed"},
      "dgp config");
  detail::read_key(j, "n", c.n);
  detail::read_key(j, "p", c.p);
  detail::read_key(j, "s0", c.s0);
  detail::read_key(j, "beta_values", c.beta_values);
  detail::read_key(j, "covariate_correlation", c.covariate_correlation);
  detail::read_key(j, "propensity_strength", c.propensity_strength);
  detail::read_key(j, "propensity_clip", c.propensity_clip);
  detail::read_key(j, "outcome_dense_scale", c.outcome_dense_scale);
  detail::read_key(j, "noise_sd1", c.noise_sd1);
  detail::read_key(j, "noise_sd0", c.noise_sd0);
  detail::read_key(j, "seed", c.seed);
}

struct GroundTruth {
  Vector beta0;
  IndexVector active_set;
  LinearModel mu1;
  LinearModel mu0;
  LogisticModel propensity;
  double noise_sd1 = 1.0;
  double noise_sd0 = 1.0;
};

/// One draw from the design. The potential outcomes are kept for
/// simulation-only checks; estimators only see `observed`.
struct Simulation {
  ObservationSet observed;
  GroundTruth truth;
  Vector y_treated;
  Vector y_control;
};

inline Simulation generate(const DgpConfig& config) {
  validate(config);
  const auto n = static_cast<Eigen::Index>(config.n);
  const auto p = static_cast<Eigen::Index>(config.p);
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  GroundTruth gt;
  gt.noise_sd1 = config.noise_sd1;
  gt.noise_sd0 = config.noise_sd0;
  gt.beta0 = Vector::Zero(p);
  for (Eigen::Index j = 0; j < config.s0; ++j) {
    gt.beta0(j) = config.beta_values[static_cast<std::size_t>(j)];
    gt.active_set.push_back(j);
  }

  Vector dense(p);
  const double magnitude = config.outcome_dense_scale / std::sqrt(static_cast<double>(p));
  for (Eigen::Index j = 0; j < p; ++j) dense(j) = uniform(rng) < 0.5 ? -magnitude : magnitude;
  gt.mu0 = LinearModel{0.0, dense};
  gt.mu1 = LinearModel{0.0, dense + gt.beta0};

  const auto support = std::min<Eigen::Index>(p, kPropensitySupport);
  Vector direction = Vector::Zero(p);
  direction.head(support).setConstant(1.0 / std::sqrt(static_cast<double>(support)));
  gt.propensity =
      LogisticModel{0.0, config.propensity_strength * direction, config.propensity_clip};

  Simulation sim;
  sim.observed.x.resize(n, p);
  sim.observed.y.resize(n);
  sim.observed.d.resize(n);
  sim.y_treated.resize(n);
  sim.y_control.resize(n);

  // AR(1) recursion gives Cov(x_j, x_k) = rho^|j-k| exactly.
  const double rho = config.covariate_correlation;
  const double innovation = std::sqrt(1.0 - rho * rho);
  Vector row(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    row(0) = normal(rng);
    for (Eigen::Index j = 1; j < p; ++j) row(j) = rho * row(j - 1) + innovation * normal(rng);
    sim.observed.x.row(i) = row.transpose();
    const int d = uniform(rng) < gt.propensity.treated(row) ? 1 : 0;
    const double y1 = gt.mu1.predict(row) + config.noise_sd1 * normal(rng);
    const double y0 = gt.mu0.predict(row) + config.noise_sd0 * normal(rng);
    sim.observed.d(i) = d;
    sim.y_treated(i) = y1;
    sim.y_control(i) = y0;
    sim.observed.y(i) = d == 1 ? y1 : y0;
  }
  sim.truth = std::move(gt);
  return sim;
}

/// f0(x) = x^T beta0.
inline double true_cate(const GroundTruth& gt, const Vector& x) {
  if (x.size() != gt.beta0.size()) {
    throw DomainError("true_cate: x has length " + std::to_string(x.size()) + ", expected " +
                      std::to_string(gt.beta0.size()));
  }
  return x.dot(gt.beta0);
}

struct TrueNuisances {
  OutcomeModels mu;
  LogisticModel propensity;
};

inline TrueNuisances true_nuisances(const GroundTruth& gt) {
  return TrueNuisances{OutcomeModels{gt.mu1, gt.mu0}, gt.propensity};
}

}  // namespace wtdl
