#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/density.hpp"
#include "ivdrf/exec.hpp"
#include "ivdrf/kernel.hpp"
#include "ivdrf/llkr.hpp"

namespace ivdrf {

enum class DrfMethod { llkr, erm_spline };
DrfMethod parse_drf_method(std::string_view name);
std::string_view to_string(DrfMethod m);

struct DrfConfig {
  std::size_t grid_size = 51;
  /// Fixed bandwidth; unset selects it by the localized criterion.
  std::optional<double> h;
  KernelId kernel = KernelId::epanechnikov;
  BandwidthObjective objective = BandwidthObjective::loocv;
  std::size_t h_grid_count = 20;
  /// Explicit selection grid (overrides the default log-spaced grid).
  std::vector<double> h_grid;
  /// Attach standard errors and confidence intervals (LLKR only).
  bool variance = true;
  double z_crit = 1.959963984540054;
  DensityConfig density;
  int spline_df = 3;  // ERM only
};

struct DrfEstimate {
  DrfMethod method = DrfMethod::llkr;
  KernelId kernel = KernelId::epanechnikov;
  double h = 0.0;
  int spline_df = 0;
  std::size_t n = 0;
  std::vector<double> grid;
  std::vector<double> theta;
  /// Asymptotic sd sigma(a) and the standard error sigma / sqrt(n h).
  std::vector<double> sigma;
  std::vector<double> se;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  /// Plug-in smoothing bias; NaN where the second difference is unavailable.
  std::vector<double> bias;
  std::vector<char> missing;
  std::vector<char> degenerate_variance;
  std::vector<std::string> point_errors;
  std::optional<BandwidthReport> bandwidth;

  bool has_intervals() const { return !se.empty(); }
};

DrfEstimate estimate_drf_llkr(std::span<const double> scores, std::span<const double> a,
                              const TargetInterval& interval, const DrfConfig& cfg,
                              ExecPolicy policy = ExecPolicy::parallel);

struct VarianceEstimate {
  double var = 0.0;    // Var[phi | A = a]
  double sigma = 0.0;  // sqrt(int K^2 / p_A(a) * var)
  double se = 0.0;     // sigma / sqrt(n h)
  double lo = 0.0;
  double hi = 0.0;
  bool degenerate = false;
};

/// `residual_sq` are squared centered scores (phi_i - theta_hat(A_i))^2.
VarianceEstimate estimate_variance(double at, double theta_hat, std::span<const double> residual_sq,
                                   std::span<const double> a, const CondDensityModel& p_a, KernelId kernel,
                                   double h, double z_crit = 1.959963984540054);

/// (h^2 / 2) theta''(a) int K s^2 with theta'' from the central second difference at grid[i].
double plugin_bias(std::span<const double> grid, std::span<const double> theta, std::size_t i, KernelId kernel,
                   double h);

/// Natural cubic spline basis with d - 1 interior knots at quantiles; d + 1 columns including the intercept.
class NaturalSplineBasis {
 public:
  NaturalSplineBasis(std::span<const double> x, int df);
  std::size_t size() const { return knots_.size(); }
  void eval(double x, double* out) const;
  const std::vector<double>& knots() const { return knots_; }

 private:
  std::vector<double> knots_;
};

DrfEstimate estimate_drf_erm(std::span<const double> scores, std::span<const double> a,
                             const TargetInterval& interval, const DrfConfig& cfg);

struct BootstrapResult {
  std::vector<double> grid;
  std::vector<double> sd;
  std::vector<double> lo;  // 2.5% percentile
  std::vector<double> hi;  // 97.5% percentile
  std::size_t replicates = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;
};

/// Pairs bootstrap: resample rows with replacement and rerun `pipeline` on each
/// replicate with a seed derived from (seed, replicate).
BootstrapResult bootstrap_drf(const Dataset& data,
                              const std::function<DrfEstimate(const Dataset&, std::uint64_t)>& pipeline,
                              std::size_t replicates, std::uint64_t seed,
                              ExecPolicy policy = ExecPolicy::parallel);

}  // namespace ivdrf
