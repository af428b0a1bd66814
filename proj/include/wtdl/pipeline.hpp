#pragma once

#include <cstdint>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/dr_score.hpp"
#include "wtdl/inference.hpp"
#include "wtdl/nuisance.hpp"
#include "wtdl/rng.hpp"

namespace wtdl {

struct PipelineSettings {
  int m = 2;
  NuisanceSettings nuisance;
  WeightMode weight_mode = WeightMode::constant_per_arm;
  double weight_floor = 1e-3;
  InferenceSettings inference;
  /// Drives fold assignment and any cross-validation; stage k uses
  /// derive_seed(seed, k).
  std::uint64_t seed = 0;
};

/// Intermediate products of the cross-fitting stage.
struct CrossFitStage {
  FoldAssignment folds;
  std::vector<NuisanceFit> fits;
  Vector q_dml;
  Vector sigma;
};

inline CrossFitStage cross_fit_stage(const ObservationSet& obs, const PipelineSettings& s) {
  CrossFitStage stage;
  stage.folds = assign_folds(obs.n(), s.m, derive_seed(s.seed, 1));
  stage.fits = cross_fit(obs, stage.folds, s.nuisance);
  stage.q_dml = build_pseudo_outcomes(obs, stage.folds, stage.fits);
  stage.sigma = estimate_weights(obs, stage.folds, stage.fits, s.weight_mode, s.weight_floor);
  return stage;
}

inline InferenceSettings seeded(InferenceSettings inference, std::uint64_t seed) {
  inference.lambda.seed = derive_seed(seed, 2);
  inference.nodewise.seed = derive_seed(seed, 3);
  return inference;
}

/// The full WTDL estimator: split into m folds, fit nuisances off-fold,
/// build DR pseudo-outcomes and variance weights, run the weighted Lasso,
/// then debias with the nodewise inverse.
inline WtdlResult estimate_wtdl(const ObservationSet& obs, const PipelineSettings& s,
                                CrossFitStage* stage_out = nullptr) {
  require_valid(obs);
  auto stage = cross_fit_stage(obs, s);
  auto result = debiased_lasso(obs, stage.q_dml, stage.sigma, seeded(s.inference, s.seed));
  if (stage_out != nullptr) *stage_out = std::move(stage);
  return result;
}

}  // namespace wtdl
