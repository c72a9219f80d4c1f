#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/exec.hpp"
#include "ivdrf/kernel.hpp"

namespace ivdrf {

struct LlkrFit {
  double a = 0.0;
  double h = 0.0;
  double intercept = 0.0;
  double slope = 0.0;  // per unit of A
  /// w_ni(a, h) for every input point in input order; empty unless requested.
  std::vector<double> weights;
  std::size_t effective_n = 0;
};

/// Local linear kernel regression of responses s on treatments A. Points are
/// sorted once so each fit only touches the window [a - h, a + h].
class LocalLinearSmoother {
 public:
  LocalLinearSmoother(std::span<const double> a, std::span<const double> s, KernelId kernel);

  std::size_t size() const { return a_.size(); }
  KernelId kernel() const { return kernel_; }

  LlkrFit fit(double a, double h, bool with_weights = false) const;
  double predict(double a, double h) const;
  /// Diagonal smoother entry at a_i = A of input point i, and the fitted value there.
  struct InSample {
    double fitted = 0.0;
    double leverage = 0.0;
  };
  InSample in_sample(std::size_t i, double h) const;

 private:
  struct Sums {
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    std::size_t count = 0;
    double a_min = 0, a_max = 0;
  };
  Sums window_sums(double a, double h) const;
  void check(const Sums& s, double a, double h) const;

  std::vector<double> a_;
  std::vector<double> s_;
  std::vector<std::size_t> order_;  // sorted position -> input index
  std::vector<std::size_t> rank_;   // input index -> sorted position
  KernelId kernel_;
};

LlkrFit llkr_fit(std::span<const double> a, std::span<const double> s, double at, double h,
                 KernelId kernel);
/// w_ni(a_i, h) with a_i = A of point i.
double leverage(std::span<const double> a, std::size_t i, double h, KernelId kernel);

/// Leverage at or above this is treated as interpolation and excluded from CV sums.
inline constexpr double kHighLeverage = 1.0 - 1e-8;

enum class BandwidthObjective { loocv, gcv, cp };

struct BandwidthReport {
  double h = 0.0;
  BandwidthObjective objective_kind = BandwidthObjective::loocv;
  std::vector<double> grid;
  /// Objective per grid value; +inf where the fit failed at some required point.
  std::vector<double> objective;
  std::vector<std::size_t> excluded_high_leverage;
  std::vector<double> failing_h;
};

/// Localized cross-validation over the points with A_i in the interval. Ties
/// (relative 1e-9) go to the larger bandwidth.
BandwidthReport select_bandwidth(std::span<const double> scores, std::span<const double> a,
                                 const TargetInterval& interval, std::span<const double> h_grid,
                                 KernelId kernel,
                                 BandwidthObjective objective = BandwidthObjective::loocv,
                                 ExecPolicy policy = ExecPolicy::parallel);

double select_bandwidth_loocv(std::span<const double> scores, std::span<const double> a,
                              const TargetInterval& interval, std::span<const double> h_grid,
                              KernelId kernel);

/// 0.9 min(sd, IQR/1.34) n^(-1/5).
double silverman_scale(std::span<const double> a);
/// Log-spaced from 0.25x to 4x the Silverman scale.
std::vector<double> default_bandwidth_grid(std::span<const double> a, std::size_t count = 20);

BandwidthObjective parse_bandwidth_objective(std::string_view name);
std::string_view to_string(BandwidthObjective objective);

}  // namespace ivdrf
