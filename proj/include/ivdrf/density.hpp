#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ivdrf/core.hpp"

namespace ivdrf {

struct DensityConfig {
  /// Multiplier applied to every rule-of-thumb bandwidth.
  double bandwidth_multiplier = 1.0;
  /// Coordinates with at most this many distinct values are matched exactly.
  std::size_t discrete_threshold = 10;
  /// Reflect the response kernel at the support edges so mass is not lost there.
  bool reflect = true;
  /// Conditioning mass below this raises low_density.
  double min_denominator = 1e-12;
};

/// p(a | x) = sum_i K_b(A_i - a) W_c(X_i - x) / sum_i W_c(X_i - x) with product
/// Epanechnikov kernels. Discrete coordinates use exact-match indicators; when
/// the response is discrete too the estimate is the empirical conditional
/// frequency Pr(A = a | X = x).
class CondDensityModel {
 public:
  static CondDensityModel fit(std::span<const double> a, const RowMatrix& x,
                              const DensityConfig& config,
                              std::optional<Support> support = std::nullopt);

  double density(double a, std::span<const double> x) const;
  /// As density() but returns nullopt instead of throwing on low conditioning mass.
  std::optional<double> try_density(double a, std::span<const double> x) const;

  std::size_t x_dim() const { return static_cast<std::size_t>(x_.cols()); }
  std::size_t size() const { return a_.size(); }
  double response_bandwidth() const { return b_; }
  const std::vector<double>& covariate_bandwidths() const { return c_; }
  bool response_discrete() const { return a_discrete_; }

 private:
  std::vector<double> a_;  // sorted by the window coordinate
  RowMatrix x_;
  double b_ = 0.0;
  std::vector<double> c_;
  bool a_discrete_ = false;
  std::vector<char> x_discrete_;
  Support support_;
  bool reflect_ = true;
  double min_den_ = 1e-12;
};

/// Epanechnikov product kernel helper: 0.75 (1 - u^2) on |u| <= 1.
inline double epan(double u) { return (u >= -1.0 && u <= 1.0) ? 0.75 * (1.0 - u * u) : 0.0; }

}  // namespace ivdrf
