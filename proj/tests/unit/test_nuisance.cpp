#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "wtdl/dgp.hpp"
#include "wtdl/nuisance.hpp"

using namespace wtdl;
using Catch::Matchers::WithinAbs;

namespace {

IndexVector all_rows(Eigen::Index n) {
  IndexVector rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

ObservationSet random_obs(Eigen::Index n, Eigen::Index p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  ObservationSet obs{Vector(n), Eigen::VectorXi(n), Matrix(n, p)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) obs.x(i, j) = z(rng);
    obs.d(i) = obs.x(i, 0) + z(rng) > 0.0 ? 1 : 0;
    obs.y(i) = 1.0 + obs.x.row(i).sum() + obs.d(i) * obs.x(i, 0) + z(rng);
  }
  return obs;
}

// Gradient of the penalized logistic loss, written out independently.
double logistic_gradient_norm(const ObservationSet& obs, const LogisticModel& m, double ridge) {
  const auto n = obs.n();
  double g0 = 0.0;
  Vector gc = Vector::Zero(obs.p());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = m.intercept + obs.x.row(i).dot(m.coef);
    const double r = 1.0 / (1.0 + std::exp(-eta)) - obs.d(i);
    g0 += r;
    gc += r * obs.x.row(i).transpose();
  }
  g0 /= static_cast<double>(n);
  gc = gc / static_cast<double>(n) + 2.0 * ridge * m.coef;
  return std::sqrt(g0 * g0 + gc.squaredNorm());
}

}  // namespace

TEST_CASE("assign_folds partitions and balances") {
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto f = assign_folds(10, 2, seed);
    CHECK(f.rows_in(0).size() == 5);
    CHECK(f.rows_in(1).size() == 5);
    auto rows = f.rows_in(0);
    const auto other = f.rows_in(1);
    rows.insert(rows.end(), other.begin(), other.end());
    std::sort(rows.begin(), rows.end());
    CHECK(rows == all_rows(10));
  }
  const auto odd = assign_folds(11, 2, 7);
  std::multiset<std::size_t> sizes{odd.rows_in(0).size(), odd.rows_in(1).size()};
  CHECK(sizes == std::multiset<std::size_t>{5, 6});
  CHECK_THROWS_AS(assign_folds(3, 2, 0), DomainError);
  CHECK_THROWS_AS(assign_folds(10, 1, 0), DomainError);
}

TEST_CASE("assign_folds is deterministic and seed dependent") {
  CHECK(assign_folds(50, 3, 5).fold_of == assign_folds(50, 3, 5).fold_of);
  CHECK_FALSE(assign_folds(50, 3, 5).fold_of == assign_folds(50, 3, 6).fold_of);
  const auto f = assign_folds(50, 3, 5);
  CHECK(f.rows_outside(1).size() + f.rows_in(1).size() == 50);
}

TEST_CASE("fit_outcome interpolates an exact line") {
  ObservationSet obs{Vector(4), Eigen::VectorXi(4), Matrix(4, 1)};
  obs.x << -1, 0, 2, 5;
  obs.y = 2.0 * obs.x.col(0).array() + 1.0;
  obs.d << 1, 1, 1, 1;
  const auto m = fit_outcome(obs, all_rows(4), 1, 0.0);
  CHECK_THAT(m.intercept, WithinAbs(1.0, 1e-8));
  CHECK_THAT(m.coef(0), WithinAbs(2.0, 1e-8));
}

TEST_CASE("fit_outcome penalty limit") {
  const auto obs = random_obs(60, 4, 1);
  const auto m = fit_outcome(obs, all_rows(60), 0, 1e12);
  double mean = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    if (obs.d(i) == 0) {
      mean += obs.y(i);
      ++count;
    }
  }
  mean /= count;
  CHECK(m.coef.cwiseAbs().maxCoeff() < 1e-4);
  CHECK_THAT(m.intercept, WithinAbs(mean, 1e-4));
}

TEST_CASE("fit_outcome matches the normal equations") {
  // Oracle: penalized least squares with an explicit unpenalized intercept
  // column, solved densely.
  for (unsigned seed = 0; seed < 4; ++seed) {
    for (Eigen::Index p : {3, 12, 80}) {  // primal and dual branches
      const auto obs = random_obs(60, p, seed);
      const double ridge = 0.3;
      const auto rows = all_rows(60);
      const auto m = fit_outcome(obs, rows, 1, ridge);

      std::vector<Eigen::Index> arm;
      for (auto i : rows) {
        if (obs.d(i) == 1) arm.push_back(i);
      }
      const auto na = static_cast<Eigen::Index>(arm.size());
      Matrix z(na, p + 1);
      Vector t(na);
      for (Eigen::Index k = 0; k < na; ++k) {
        z(k, 0) = 1.0;
        z.row(k).tail(p) = obs.x.row(arm[static_cast<std::size_t>(k)]);
        t(k) = obs.y(arm[static_cast<std::size_t>(k)]);
      }
      Matrix a = z.transpose() * z / static_cast<double>(na);
      for (Eigen::Index j = 1; j <= p; ++j) a(j, j) += ridge;
      const Vector sol = a.fullPivLu().solve(z.transpose() * t / static_cast<double>(na));
      CHECK_THAT(m.intercept, WithinAbs(sol(0), 1e-8));
      CHECK((m.coef - sol.tail(p)).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("fit_outcome minimum norm solution when underdetermined") {
  const auto obs = random_obs(20, 40, 3);
  const auto m = fit_outcome(obs, all_rows(20), 1, 0.0);
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    if (obs.d(i) == 1) CHECK_THAT(m.predict(obs.x.row(i).transpose()), WithinAbs(obs.y(i), 1e-8));
  }
}

TEST_CASE("fit_outcome rejects an empty arm") {
  auto obs = random_obs(20, 3, 4);
  obs.d.setOnes();
  CHECK_THROWS_AS(fit_outcome(obs, all_rows(20), 0, 1.0), DomainError);
}

TEST_CASE("fit_propensity reaches a stationary point") {
  for (Eigen::Index p : {3, 50}) {  // primal Newton and the Woodbury branch
    const auto obs = random_obs(40, p, 11);
    PropensityDiagnostics diag;
    const double ridge = 0.05;
    const auto m = fit_propensity(obs, all_rows(40), ridge, 0.01, &diag);
    CHECK(diag.converged);
    CHECK(logistic_gradient_norm(obs, m, ridge) < 1e-7);
  }
}

TEST_CASE("fit_propensity on unrelated treatment") {
  // intercept and slopes vanish in expectation; average over seeds
  const int seeds = 20;
  const Eigen::Index n = 2000;
  std::vector<double> intercepts, slopes;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(s));
    std::normal_distribution<double> z;
    ObservationSet obs{Vector::Zero(n), Eigen::VectorXi(n), Matrix(n, 2)};
    for (Eigen::Index i = 0; i < n; ++i) {
      obs.x(i, 0) = z(rng);
      obs.x(i, 1) = z(rng);
      obs.d(i) = static_cast<int>(i % 2);
    }
    // shuffle treatment labels independently of x
    for (Eigen::Index k = n - 1; k > 0; --k) {
      std::uniform_int_distribution<Eigen::Index> pick(0, k);
      std::swap(obs.d(k), obs.d(pick(rng)));
    }
    const auto m = fit_propensity(obs, all_rows(n), 1e-6, 0.05);
    intercepts.push_back(m.intercept);
    slopes.push_back(m.coef(0));
  }
  const auto mean_sd = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
  };
  const auto [mi, si] = mean_sd(intercepts);
  const auto [ms, ss] = mean_sd(slopes);
  CHECK(std::abs(mi) <= 3.0 * si / std::sqrt(double(seeds)) + 1e-12);
  CHECK(std::abs(ms) <= 3.0 * ss / std::sqrt(double(seeds)));
  CHECK(std::abs(mi) < 0.05);
  CHECK(std::abs(ms) < 0.05);
}

TEST_CASE("fit_propensity stays finite under separation and clips predictions") {
  ObservationSet obs{Vector::Zero(6), Eigen::VectorXi(6), Matrix(6, 1)};
  obs.x << -3, -2, -1, 1, 2, 3;
  obs.d << 0, 0, 0, 1, 1, 1;
  const auto m = fit_propensity(obs, all_rows(6), 1.0, 0.1);
  CHECK(std::isfinite(m.intercept));
  CHECK(std::isfinite(m.coef(0)));
  for (double v : {-1e6, -5.0, 0.0, 5.0, 1e6}) {
    Vector x(1);
    x << v;
    const double p1 = m.treated(x);
    CHECK(p1 >= 0.1);
    CHECK(p1 <= 0.9);
  }
  CHECK_THROWS_AS(fit_propensity(obs, all_rows(6), 0.0, 0.1), DomainError);
  CHECK_THROWS_AS(fit_propensity(obs, IndexVector{0, 1, 2}, 1.0, 0.1), DomainError);
}

TEST_CASE("cross_fit trains each fold on its complement only") {
  const auto obs = random_obs(80, 5, 21);
  const auto folds = assign_folds(80, 2, 3);
  NuisanceSettings settings;
  const auto fits = cross_fit(obs, folds, settings);
  REQUIRE(fits.size() == 2);
  for (int f = 0; f < 2; ++f) {
    const auto direct = fit_nuisances(obs, folds.rows_outside(f), f, settings);
    CHECK(fits[f].fold == f);
    CHECK(fits[f].mu.treated.coef == direct.mu.treated.coef);
    CHECK(fits[f].propensity.coef == direct.propensity.coef);
    CHECK(fits[f].diagnostics.training_rows == static_cast<Eigen::Index>(folds.rows_in(1 - f).size()));
  }
  CHECK_FALSE(fits[0].mu.treated.coef == fits[1].mu.treated.coef);

  // perturbing the outcomes of fold 0 leaves fold 0's models untouched
  auto perturbed = obs;
  for (auto i : folds.rows_in(0)) perturbed.y(i) += 100.0;
  const auto refit = cross_fit(perturbed, folds, settings);
  CHECK(refit[0].mu.treated.coef == fits[0].mu.treated.coef);
  CHECK(refit[0].mu.control.intercept == fits[0].mu.control.intercept);
  CHECK_FALSE(refit[1].mu.treated.intercept == fits[1].mu.treated.intercept);
}

TEST_CASE("cross_fit reports the failing fold") {
  auto obs = random_obs(20, 2, 2);
  const auto folds = assign_folds(20, 2, 1);
  for (auto i : folds.rows_in(1)) obs.d(i) = 1;
  for (auto i : folds.rows_in(0)) obs.d(i) = 0;
  try {
    cross_fit(obs, folds, NuisanceSettings{});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("fold 0") != std::string::npos);
  }
}

TEST_CASE("out-of-fold outcome error shrinks with n") {
  DgpConfig c;
  c.p = 10;
  c.s0 = 2;
  c.beta_values = {1.0, -1.0};
  c.propensity_strength = 0.5;
  std::vector<double> med;
  for (std::int64_t n : {200, 800}) {
    c.n = n;
    std::vector<double> errors;
    for (std::uint64_t s = 0; s < 15; ++s) {
      c.seed = s;
      const auto sim = generate(c);
      const auto folds = assign_folds(sim.observed.n(), 2, s);
      const auto fits = cross_fit(sim.observed, folds, NuisanceSettings{});
      double sse = 0.0;
      for (Eigen::Index i = 0; i < sim.observed.n(); ++i) {
        const Vector xi = sim.observed.x.row(i).transpose();
        const auto& fit = fits[static_cast<std::size_t>(folds.fold_of[static_cast<std::size_t>(i)])];
        sse += std::pow(fit.mu.treated.predict(xi) - sim.truth.mu1.predict(xi), 2);
      }
      errors.push_back(sse / static_cast<double>(n));
    }
    std::nth_element(errors.begin(), errors.begin() + 7, errors.end());
    med.push_back(errors[7]);
  }
  CHECK(med[1] < med[0]);
}
