#pragma once

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/density.hpp"

namespace ivdrf {

enum class WeightingKind { raw_coordinate, polynomial, conditional_density, custom };

/// Weighting function pi(z, l) with a uniform bound |pi| <= bound. Values are
/// clamped to the bound on evaluation.
class WeightingFunction {
 public:
  using Fn = std::function<double(std::span<const double> z, std::span<const double> l)>;

  WeightingFunction() = default;
  WeightingFunction(WeightingKind kind, std::string id, double bound, Fn fn);

  static WeightingFunction coordinate(std::size_t j, double bound);
  static WeightingFunction polynomial(std::size_t j, int degree, double bound);
  static WeightingFunction custom(std::string id, double bound, Fn fn);
  /// Exact lookup keyed by the concatenation (z..., l...); unknown keys throw.
  static WeightingFunction table(std::string id, std::map<std::vector<double>, double> values);

  double operator()(std::span<const double> z, std::span<const double> l) const;
  std::vector<double> evaluate(const Dataset& data) const;

  WeightingKind kind() const { return kind_; }
  const std::string& id() const { return id_; }
  double bound() const { return bound_; }
  /// Anchor treatment value for density weighting functions (NaN otherwise).
  double anchor() const { return anchor_; }
  void set_anchor(double a0) { anchor_ = a0; }

 private:
  WeightingKind kind_ = WeightingKind::custom;
  std::string id_;
  double bound_ = 0.0;
  double anchor_ = std::numeric_limits<double>::quiet_NaN();
  Fn fn_;
};

/// pi(z, l) = p_hat_{A|Z,L}(a0 | z, l) fitted on `train`; bound 1.5 x training max.
/// Query points with no conditioning mass fall back to the marginal p_hat_A(a0).
WeightingFunction make_density_rwf(const Dataset& train, double a0, const DensityConfig& config);

/// Parses "coordinate:j", "poly:j:deg", "density@a0" or "constant:c". Bounds of
/// coordinate/polynomial forms come from `data` (1.5 x largest magnitude);
/// density forms are trained on `data`.
WeightingFunction parse_weighting_spec(const std::string& spec, const Dataset& data,
                                       const DensityConfig& config);

}  // namespace ivdrf
