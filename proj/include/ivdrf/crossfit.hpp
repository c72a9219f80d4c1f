#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/exec.hpp"
#include "ivdrf/nuisance.hpp"
#include "ivdrf/scores.hpp"
#include "ivdrf/weighting.hpp"

namespace ivdrf {

struct CrossfitConfig {
  std::size_t folds = 5;
  double subsplit_fraction = 0.5;
  bool nested = false;
  std::size_t inner_folds = 2;
  std::vector<ScoreTag> tags{ScoreTag::aipw_iv};
  NuisanceConfig nuisance;
  std::uint64_t seed = 0;
  /// Caps the empirical-measure size per fold (0 keeps every row).
  std::size_t emp_cap = 0;
  ExecPolicy policy = ExecPolicy::parallel;
  /// Score integrals through single-observation functions instead of panels.
  bool reference_scores = false;
  /// Test hook: replaces nuisance training. Receives the training rows and the fold.
  std::function<std::shared_ptr<const NuisanceVector>(const Dataset& train, std::size_t fold)>
      nuisance_override;
};

struct FoldLog {
  std::size_t fold = 0;
  std::size_t train_rows = 0;
  std::size_t emp_rows = 0;
  std::size_t scored_rows = 0;
  double kappa_floor = 0.0;
  ClipCounts clips;
};

struct CrossfitResult {
  std::vector<ScoreVector> scores;  // one per requested tag, in request order
  FoldPlan plan;
  std::vector<FoldLog> log;
  std::vector<double> zpi;

  const ScoreVector& get(ScoreTag tag) const;
};

/// Algorithm: for each fold k, train nuisances on the first subsplit of the
/// complement, form the empirical measure from the second, score fold k.
CrossfitResult crossfit_scores(const Dataset& data, const WeightingFunction& pi,
                               const TargetInterval& interval, const CrossfitConfig& cfg);
/// Same with Z_pi supplied for every row.
CrossfitResult crossfit_scores(const Dataset& data, std::span<const double> zpi, const std::string& pi_id,
                               const TargetInterval& interval, const CrossfitConfig& cfg);

/// Nested variant: nuisances on the full complement of fold k; row i in inner
/// fold (k, j) uses the empirical measure of the other inner folds of k.
CrossfitResult nested_crossfit_scores(const Dataset& data, const WeightingFunction& pi,
                                      const TargetInterval& interval, const CrossfitConfig& cfg);
CrossfitResult nested_crossfit_scores(const Dataset& data, std::span<const double> zpi,
                                      const std::string& pi_id, const TargetInterval& interval,
                                      const CrossfitConfig& cfg);

}  // namespace ivdrf
