#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace wtdl {

/// x -> intercept + x^T coef.
struct LinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coef;

  template <typename Derived>
  [[nodiscard]] double predict(const Eigen::MatrixBase<Derived>& x) const {
    return intercept + coef.dot(x);
  }
};

inline double logistic(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Treatment probability pi(1|x) = clip(logistic(intercept + x^T coef)).
struct LogisticModel {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  double clip = 0.05;

  template <typename Derived>
  [[nodiscard]] double treated(const Eigen::MatrixBase<Derived>& x) const {
    return std::clamp(logistic(intercept + coef.dot(x)), clip, 1.0 - clip);
  }

  /// pi(d|x) for d in {0, 1}.
  template <typename Derived>
  [[nodiscard]] double prob(int d, const Eigen::MatrixBase<Derived>& x) const {
    const double p1 = treated(x);
    return d == 1 ? p1 : 1.0 - p1;
  }
};

/// The pair of arm-specific outcome regressions mu(1), mu(0).
struct OutcomeModels {
  LinearModel treated;
  LinearModel control;

  template <typename Derived>
  [[nodiscard]] double predict(int d, const Eigen::MatrixBase<Derived>& x) const {
    return d == 1 ? treated.predict(x) : control.predict(x);
  }
};

}  // namespace wtdl
