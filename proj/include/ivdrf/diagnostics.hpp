#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/density.hpp"
#include "ivdrf/exec.hpp"
#include "ivdrf/regression.hpp"
#include "ivdrf/weighting.hpp"

namespace ivdrf {

/// Quantile grid of L: `per_dim` interior quantiles per coordinate (distinct
/// values for discrete coordinates), product grid truncated to `cap` rows.
RowMatrix quantile_l_grid(const Dataset& data, std::size_t per_dim = 9, std::size_t cap = 81,
                          std::size_t discrete_threshold = 10);

// ---------------------------------------------------------------------------
// Relevance: chi-square divergence of Z | A = a, L = l from Z | L = l.

struct RelevanceConfig {
  DensityConfig density;
  /// Rows nearest to each grid l whose Z values stand in for draws from Z | L = l.
  std::size_t neighbours = 200;
  double threshold = 0.05;
  ExecPolicy policy = ExecPolicy::parallel;
};

struct RelevanceCurve {
  std::vector<double> a_grid;
  RowMatrix l_grid;
  std::vector<std::vector<double>> divergence;    // [a][l]; NaN where flagged
  std::vector<std::vector<double>> density_var;   // Var[p(a | Z, l) | L = l]
  std::vector<std::vector<char>> floor_hit;       // [a][l]
  std::vector<double> min_divergence;             // over l, per a
  std::vector<double> mean_divergence;
  std::vector<char> below_threshold;              // per a, using the minimum
  double threshold = 0.05;
};

RelevanceCurve chi2_divergence_curve(const Dataset& data, std::span<const double> a_grid, const RowMatrix& l_grid,
                                     const RelevanceConfig& config = {});

// ---------------------------------------------------------------------------
// kappa(a, l) = E[Z_pi | A = a, L = l] - E[Z_pi | L = l] from two regressions.

class KappaModel {
 public:
  static KappaModel fit(const Dataset& data, std::span<const double> zpi, const RegressionConfig& config);
  double operator()(double a, std::span<const double> l) const;
  double zpi_sd() const { return zpi_sd_; }

 private:
  std::shared_ptr<const RegressionModel> m_z_;
  std::shared_ptr<const RegressionModel> rho_;
  std::size_t l_dim_ = 0;
  double zpi_sd_ = 0.0;
};

struct UrwfConfig {
  std::size_t a_points = 21;
  /// Explicit a-grid; points inside the interval are used instead of a_points.
  std::vector<double> a_grid;
  std::size_t l_per_dim = 9;
  std::size_t l_cap = 81;
  std::optional<double> epsilon;  // default epsilon_scale x sd(Z_pi)
  double epsilon_scale = 0.05;
  RegressionConfig regression;
};

struct UrwfVerdict {
  TargetInterval interval;
  std::vector<double> a_grid;
  RowMatrix l_grid;
  double min_abs_kappa = 0.0;
  double max_abs_kappa = 0.0;
  bool sign_constant = false;
  int sign = 0;
  double epsilon = 0.0;
  bool pass = false;
  std::string weighting_id;
};

UrwfVerdict check_urwf(const Dataset& data, const WeightingFunction& pi, const TargetInterval& interval,
                       const UrwfConfig& config = {});
/// Verdict from an already fitted kappa model (used when sweeping intervals).
UrwfVerdict check_urwf(const KappaModel& kappa, const RowMatrix& l_grid, const TargetInterval& interval,
                       double epsilon, const UrwfConfig& config);

struct KappaMap {
  std::vector<double> a_grid;
  RowMatrix l_grid;
  std::vector<std::vector<double>> kappa;     // [a][l]
  std::vector<std::vector<char>> crossing;    // sign differs from the next a cell
  std::vector<char> l_has_crossing;
};

KappaMap kappa_sign_map(const Dataset& data, const WeightingFunction& pi, std::span<const double> a_grid,
                        const RowMatrix& l_grid, const RegressionConfig& config = {},
                        ExecPolicy policy = ExecPolicy::parallel);

// ---------------------------------------------------------------------------
// Finite open covers by density weighting functions.

struct CoverConfig {
  UrwfConfig urwf;
  DensityConfig density;
  double initial_radius = 0.1;
  double min_radius = 0.01;
  double growth = 1.5;
  std::size_t max_members = 200;
};

struct CoverMember {
  double center = 0.0;
  double radius = 0.0;
  WeightingFunction pi;
  UrwfVerdict verdict;
};

struct CoverPlan {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<CoverMember> members;
  /// Union of the open members contains [lo, hi].
  bool covers() const;
};

CoverPlan cover_interval(const Dataset& data, double lo, double hi, const CoverConfig& config = {});

// ---------------------------------------------------------------------------
// AIV weight identity on simulated data.

/// Known treatment mechanism of a simulation design, exposing omega_{a,pi}(u, l).
class LatentTreatmentModel {
 public:
  virtual ~LatentTreatmentModel() = default;
  virtual double omega(double a, std::span<const double> u, std::span<const double> l,
                       const WeightingFunction& pi) const = 0;
};

struct AivBin {
  double l_lo = 0.0;
  double l_hi = 0.0;
  std::size_t count = 0;
  double mean = 0.0;
  double se = 0.0;
  double max_abs_dev = 0.0;  // max |omega - 1| in the bin
  bool mean_deviates = false;
};

struct AivReport {
  double a = 0.0;
  std::vector<AivBin> bins;
  double max_abs_dev = 0.0;
  double tolerance = 1e-8;
  /// omega differs from 1 somewhere: the additive structure fails for this (a, pi).
  bool violation = false;
};

AivReport aiv_weight_check(const Dataset& data, const LatentTreatmentModel& model, const WeightingFunction& pi,
                           double a, std::size_t l_bins = 5, double tolerance = 1e-8);

}  // namespace ivdrf
