#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/crossfit.hpp"
#include "ivdrf/diagnostics.hpp"
#include "ivdrf/drf.hpp"
#include "ivdrf/weighting.hpp"

namespace ivdrf {

/// Seeded split of n rows into (fitting rows, held-out rows); the held-out part
/// has round(fraction * n) rows.
std::pair<std::vector<Index>, std::vector<Index>> holdout_split(std::size_t n, double fraction, std::uint64_t seed);

/// Weighting function from a spec string. Density specs are trained on
/// `pi_train`; "density" without an anchor uses the interval midpoint.
WeightingFunction build_weighting(const std::string& spec, const Dataset& pi_train, const Dataset& data,
                                  const TargetInterval& interval, const DensityConfig& config);

struct DiagnosePlan {
  TargetInterval interval;
  std::string weighting = "density";
  double holdout = 0.2;
  std::uint64_t seed = 0;
  std::size_t a_points = 51;
  RelevanceConfig relevance;
  UrwfConfig urwf;
  DensityConfig pi_density;
  bool cover = false;
  CoverConfig cover_config;
};

struct DiagnoseOutput {
  WeightingFunction pi;
  RelevanceCurve relevance;
  UrwfVerdict verdict;
  KappaMap kappa;
  std::optional<CoverPlan> cover;
};

DiagnoseOutput run_diagnose(const Dataset& data, const DiagnosePlan& plan);

struct EstimatePlan {
  TargetInterval interval;
  std::string weighting = "density";
  double holdout = 0.2;
  std::uint64_t seed = 0;
  CrossfitConfig crossfit;
  DrfMethod method = DrfMethod::llkr;
  DrfConfig drf;
  std::size_t bootstrap = 0;
  bool force = false;
  UrwfConfig urwf;
  DensityConfig pi_density;
};

struct EstimateOutput {
  WeightingFunction pi;
  UrwfVerdict verdict;
  CrossfitResult crossfit;
  /// Curve for the first requested estimator tag.
  DrfEstimate drf;
  std::optional<BootstrapResult> bootstrap;
  std::size_t estimation_rows = 0;
};

/// Holds out a slice for a density weighting function, checks the uniform
/// relevance condition (refusing unless forced), cross-fits scores and smooths them.
EstimateOutput run_estimate(const Dataset& data, const EstimatePlan& plan);

}  // namespace ivdrf
