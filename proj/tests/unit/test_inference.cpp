#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "wtdl/inference.hpp"
#include "wtdl/pipeline.hpp"

using namespace wtdl;
using Catch::Matchers::WithinAbs;

namespace {

WeightedProblem random_problem(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  ObservationSet obs{Vector(n), Eigen::VectorXi(n), Matrix(n, p)};
  Vector q(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) obs.x(i, j) = z(rng);
    obs.d(i) = static_cast<int>(i % 2);
    obs.y(i) = 0.0;
    q(i) = 2.0 * obs.x(i, 0) - obs.x(i, 1) + z(rng);
  }
  Vector sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) sigma(i) = 0.5 + std::abs(z(rng));
  return build_weighted(obs, q, sigma);
}

LassoOptions tight() {
  LassoOptions o;
  o.tol = 1e-13;
  o.max_iter = 1000000;
  return o;
}

Simulation small_sim(std::int64_t n, std::int64_t p, std::uint64_t seed) {
  DgpConfig c;
  c.n = n;
  c.p = p;
  c.s0 = 2;
  c.beta_values = {1.0, -0.5};
  c.propensity_strength = 0.5;
  c.seed = seed;
  return generate(c);
}

}  // namespace

TEST_CASE("exact inverse turns debiasing into least squares") {
  const auto wp = random_problem(200, 10, 1);
  const double n = 200.0;
  const Matrix sigma = wp.w.transpose() * wp.w / n;
  const Matrix exact = sigma.inverse();
  const Vector ols = wp.w.colPivHouseholderQr().solve(wp.q_wdml);
  for (double lambda : {0.01, 0.1, 1.0}) {
    const auto fit = fit_lasso(wp.w, wp.q_wdml, lambda, tight());
    const Vector b = debias(fit, exact, wp);
    CHECK((b - ols).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("unpenalized square design needs no correction") {
  const auto wp = random_problem(6, 6, 2);
  const auto fit = fit_lasso(wp.w, wp.q_wdml, 0.0, tight());
  const Vector b = debias(fit, Matrix::Identity(6, 6), wp);
  CHECK((b - fit.beta).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("residual and subgradient forms agree") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto wp = random_problem(60, 90, 10 + seed);
    const auto fit = fit_lasso(wp.w, wp.q_wdml, 0.05, tight());
    REQUIRE(fit.converged);
    const auto inv = build_theta(wp.w, Vector::Constant(90, 0.05));
    const Vector a = debias(fit, inv, wp);
    const Vector b = debias_kkt_form(fit, inv.theta);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("standard errors") {
  CHECK((standard_errors(Matrix::Identity(3, 3), Matrix::Identity(3, 3), 100).array() - 0.1).abs().maxCoeff() <= 1e-15);

  Matrix one(1, 1), theta(1, 1);
  one << 4.0;
  theta << 0.25;
  CHECK_THAT(standard_errors(theta, one, 25)(0), WithinAbs(std::sqrt(1.0 / (25.0 * 4.0)), 1e-15));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  Matrix a(3, 3), t(3, 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      a(r, c) = z(rng);
      t(r, c) = z(rng);
    }
  }
  const Matrix s = a * a.transpose();
  const auto se = standard_errors(t, s, 50);
  for (int j = 0; j < 3; ++j) {
    double quad = 0.0;
    for (int k = 0; k < 3; ++k) {
      for (int l = 0; l < 3; ++l) quad += t(j, k) * s(k, l) * t(j, l);
    }
    CHECK_THAT(se(j), WithinAbs(std::sqrt(quad / 50.0), 1e-12));
  }
  CHECK_THROWS_AS(standard_errors(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 10), NumericalError);
}

TEST_CASE("normal quantiles and intervals") {
  const auto ci = confidence_intervals(Vector::Zero(1), Vector::Ones(1), 0.05);
  CHECK_THAT(ci[0].first, WithinAbs(-1.959963985, 1e-8));
  CHECK_THAT(ci[0].second, WithinAbs(1.959963985, 1e-8));
  const auto wide = confidence_intervals(Vector::Zero(1), Vector::Ones(1), 0.32);
  CHECK(wide[0].second > 0.99);
  CHECK(wide[0].second < 1.00);
  CHECK_THAT(wide[0].second, WithinAbs(0.994457883, 1e-8));
  CHECK_THAT(normal_quantile(0.5), WithinAbs(0.0, 1e-15));
  CHECK_THAT(normal_quantile(1e-10), WithinAbs(-6.361340902404056, 1e-9));
  CHECK_THAT(normal_quantile(0.999), WithinAbs(3.090232306167813, 1e-9));
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
  CHECK_THROWS_AS(confidence_intervals(Vector::Zero(1), Vector::Ones(1), 0.0), DomainError);
}

TEST_CASE("intervals nest as alpha shrinks") {
  Vector b(3), se(3);
  b << 0.5, -1.0, 2.0;
  se << 0.1, 1.0, 0.3;
  const auto narrow = confidence_intervals(b, se, 0.2);
  const auto wide = confidence_intervals(b, se, 0.01);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(wide[j].first < narrow[j].first);
    CHECK(wide[j].second > narrow[j].second);
    CHECK_THAT(0.5 * (wide[j].first + wide[j].second), WithinAbs(b(static_cast<Eigen::Index>(j)), 1e-12));
  }
}

TEST_CASE("noiseless oracle recovers beta0") {
  DgpConfig c;
  c.n = 80;
  c.p = 6;
  c.s0 = 2;
  c.beta_values = {1.0, -2.0};
  c.noise_sd1 = 1e-9;
  c.noise_sd0 = 1e-9;
  c.propensity_strength = 0.8;
  const auto sim = generate(c);
  InferenceSettings s;
  s.fixed_lambda = 1e-10;
  s.lasso = tight();
  const auto res = oracle_estimator(sim.observed, sim.truth, s);
  CHECK((res.fit.beta - sim.truth.beta0).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("baseline with injected oracle nuisances equals the oracle Lasso") {
  const auto sim = small_sim(120, 8, 3);
  const auto nu = true_nuisances(sim.truth);
  NuisanceFit full;
  full.mu = nu.mu;
  full.propensity = nu.propensity;
  InferenceSettings s;
  const Vector sigma = oracle_sigma(sim.observed, sim.truth);
  const auto base = dr_catelasso_no_crossfit(sim.observed, full, s, WeightMode::constant_per_arm, 1e-3, &sigma);
  const auto oracle = oracle_estimator(sim.observed, sim.truth, s);
  CHECK(base.beta == oracle.fit.beta);
}

TEST_CASE("baseline differs from the cross-fitted Lasso") {
  const auto sim = small_sim(200, 20, 4);
  PipelineSettings ps;
  const auto crossfit = estimate_wtdl(sim.observed, ps);
  IndexVector all;
  for (Eigen::Index i = 0; i < 200; ++i) all.push_back(i);
  const auto full = fit_nuisances(sim.observed, all, 0, ps.nuisance);
  const auto base = dr_catelasso_no_crossfit(sim.observed, full, ps.inference, ps.weight_mode, ps.weight_floor);
  CHECK_FALSE(base.beta == crossfit.fit.beta);
}

TEST_CASE("diagnostics vanish at the truth") {
  const auto sim = small_sim(100, 10, 5);
  const auto wp = build_weighted(sim.observed, oracle_pseudo_outcomes(sim.observed, sim.truth),
                                 oracle_sigma(sim.observed, sim.truth));
  LassoFit at_truth;
  at_truth.beta = sim.truth.beta0;
  const auto inv = build_theta(wp.w, Vector::Constant(10, 0.1));
  const auto d = diagnostics(at_truth, inv, wp, sim.observed, sim.truth);
  CHECK(d.delta_norm == 0.0);
  CHECK(d.l1_error == 0.0);
  CHECK(d.pred_error == 0.0);
  CHECK(d.residual_gap == 0.0);
}

TEST_CASE("bias term closes the debiasing identity") {
  // b - beta0 = Theta W^T eps / n - Delta / sqrt(n), eps = q_wdml - W beta0
  const auto sim = small_sim(150, 40, 6);
  InferenceSettings s;
  s.lasso = tight();
  const auto res = oracle_estimator(sim.observed, sim.truth, s);
  const auto& wp = res.problem;
  const double n = 150.0;
  const Vector eps = wp.q_wdml - wp.w * sim.truth.beta0;
  const Vector err = res.fit.beta - sim.truth.beta0;
  const Vector delta = std::sqrt(n) * (res.inverse.theta * (wp.w.transpose() * (wp.w * err)) / n - err);
  const Vector lhs = res.estimate.b - sim.truth.beta0;
  const Vector rhs = res.inverse.theta * wp.w.transpose() * eps / n - delta / std::sqrt(n);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
  const auto d = diagnostics(res.fit, res.inverse, wp, sim.observed, sim.truth);
  CHECK_THAT(d.delta_norm, WithinAbs(delta.lpNorm<1>(), 1e-9));
  CHECK_THAT(d.l1_error, WithinAbs(err.lpNorm<1>(), 1e-12));
}

TEST_CASE("residual gap is zero with injected true nuisances") {
  const auto sim = small_sim(100, 5, 7);
  const auto folds = assign_folds(100, 2, 1);
  const auto nu = true_nuisances(sim.truth);
  std::vector<NuisanceFit> fits(2);
  for (int f = 0; f < 2; ++f) {
    fits[f].fold = f;
    fits[f].mu = nu.mu;
    fits[f].propensity = nu.propensity;
  }
  const Vector q = build_pseudo_outcomes(sim.observed, folds, fits);
  const auto wp = build_weighted(sim.observed, q, oracle_sigma(sim.observed, sim.truth));
  const auto fit = fit_lasso(wp.w, wp.q_wdml, 0.1);
  const auto inv = build_theta(wp.w, Vector::Constant(5, 0.1));
  CHECK(diagnostics(fit, inv, wp, sim.observed, sim.truth).residual_gap == 0.0);
}

TEST_CASE("compatibility audit on scaled identities") {
  for (Eigen::Index p : {2, 4, 6}) {
    for (const IndexVector& active : {IndexVector{0}, IndexVector{0, 1}}) {
      const auto one = compatibility_constant(Matrix::Identity(p, p), active, 1e-3);
      CHECK(std::abs(one.value - 1.0) <= one.slack);
      const auto two = compatibility_constant(2.0 * Matrix::Identity(p, p), active, 1e-3);
      CHECK(std::abs(two.value - 2.0) <= two.slack);
    }
  }
}

TEST_CASE("compatibility audit against a brute-force oracle") {
  // p = 2, S = {0}: b = (1, u) with |u| <= 3, so the constant is
  // min_u Sigma00 + 2 Sigma01 u + Sigma11 u^2 over [-3, 3].
  Matrix s(2, 2);
  s << 1.0, 0.8, 0.8, 1.0;
  double brute = std::numeric_limits<double>::infinity();
  for (int k = -300000; k <= 300000; ++k) {
    const double u = k * 1e-5;
    brute = std::min(brute, s(0, 0) + 2 * s(0, 1) * u + s(1, 1) * u * u);
  }
  const auto audit = compatibility_constant(s, IndexVector{0}, 1e-3);
  CHECK_THAT(audit.value, WithinAbs(brute, 1e-8));
  CHECK_THAT(audit.value, WithinAbs(1.0 - 0.64, 1e-8));
}

TEST_CASE("compatibility audit on a singular cone direction") {
  Matrix s(3, 3);
  s << 1, -1, 0, -1, 1, 0, 0, 0, 1;  // (1, 1, 0) is a null direction
  const auto audit = compatibility_constant(s, IndexVector{0}, 1e-2);
  CHECK(audit.value <= audit.slack);
  CHECK_THROWS_AS(compatibility_constant(Matrix::Identity(13, 13), IndexVector{0}), DomainError);
  CHECK_THROWS_AS(compatibility_constant(Matrix::Identity(3, 3), IndexVector{}), DomainError);
}

TEST_CASE("eigenvalue range") {
  Vector diag(3);
  diag << 0.5, 2.0, 1.0;
  const auto [lo, hi] = eigenvalue_range(diag.asDiagonal().toDenseMatrix());
  CHECK_THAT(lo, WithinAbs(0.5, 1e-12));
  CHECK_THAT(hi, WithinAbs(2.0, 1e-12));
}

TEST_CASE("estimate JSON layout") {
  const auto sim = small_sim(100, 3, 8);
  const auto res = estimate_wtdl(sim.observed, PipelineSettings{});
  const nlohmann::json j = res.estimate;
  CHECK(j.at("b").size() == 3);
  CHECK(j.at("se").size() == 3);
  CHECK(j.at("beta_lasso").size() == 3);
  CHECK(j.at("ci").size() == 3);
  CHECK(j.at("ci")[0].size() == 2);
  CHECK(j.at("alpha").get<double>() == 0.05);
  CHECK(j.at("n").get<int>() == 100);
  CHECK(j.at("p").get<int>() == 3);
  CHECK(j.contains("lambda"));
}

TEST_CASE("oracle and feasible Lasso approach each other as n grows") {
  std::vector<double> med;
  for (std::int64_t n : {200, 800}) {
    std::vector<double> gaps;
    for (std::uint64_t seed = 0; seed < 9; ++seed) {
      const auto sim = small_sim(n, 30, 50 + seed);
      PipelineSettings ps;
      ps.seed = seed;
      const auto feasible = estimate_wtdl(sim.observed, ps);
      const auto oracle = oracle_estimator(sim.observed, sim.truth, ps.inference);
      gaps.push_back((feasible.fit.beta - oracle.fit.beta).lpNorm<1>());
    }
    std::nth_element(gaps.begin(), gaps.begin() + 4, gaps.end());
    med.push_back(gaps[4]);
  }
  CHECK(med[1] < med[0]);
}

TEST_CASE("baseline l1 error shrinks with n") {
  std::vector<double> med;
  for (std::int64_t n : {200, 800}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 9; ++seed) {
      const auto sim = small_sim(n, 30, 80 + seed);
      IndexVector all;
      for (Eigen::Index i = 0; i < n; ++i) all.push_back(i);
      PipelineSettings ps;
      const auto full = fit_nuisances(sim.observed, all, 0, ps.nuisance);
      const auto fit = dr_catelasso_no_crossfit(sim.observed, full, ps.inference, ps.weight_mode, ps.weight_floor);
      errs.push_back((fit.beta - sim.truth.beta0).lpNorm<1>());
    }
    std::nth_element(errs.begin(), errs.begin() + 4, errs.end());
    med.push_back(errs[4]);
  }
  CHECK(med[1] < med[0]);
}
