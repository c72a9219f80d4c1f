#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "ivdrf/core.hpp"

namespace ivdrf {

/// One-dimensional spline basis. Continuous coordinates use uniform cubic
/// B-splines whose knots extend past the data range, so constants and lines lie
/// in the null space of the difference penalty. Coordinates with few distinct
/// values use piecewise-linear hats centred on the observed levels.
class SplineBasis1D {
 public:
  static SplineBasis1D cubic(double lo, double hi, int size);
  static SplineBasis1D levels(std::vector<double> values);

  int size() const { return size_; }
  int order() const { return discrete_ ? 2 : 4; }
  bool discrete() const { return discrete_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& level_values() const { return levels_; }

  /// Writes order() values starting at basis index `first`; x is clamped to [lo, hi].
  int eval(double x, double* values) const;
  /// Second-order difference penalty D'D (zero for level bases).
  RowMatrix penalty() const;

 private:
  int size_ = 0;
  bool discrete_ = false;
  double lo_ = 0.0, hi_ = 1.0, step_ = 1.0;
  std::vector<double> levels_;
};

enum class RegressionMethod { penalized_spline, local_linear };

struct RegressionConfig {
  RegressionMethod method = RegressionMethod::penalized_spline;
  int spline_df = 8;
  /// Difference-penalty weight; negative selects it by GCV per response.
  double penalty = -1.0;
  /// Relative ridge added to the diagonal (times the largest Gram diagonal).
  double ridge = 1e-10;
  /// Coordinates with at most this many distinct values get a level basis.
  std::size_t discrete_threshold = 10;
  /// Upper bound on tensor basis size; df is reduced per dimension to respect it.
  std::size_t max_params = 400;
  /// Local-linear method: multiplier on the per-coordinate rule-of-thumb bandwidth.
  double bandwidth_multiplier = 1.0;
};

RegressionMethod parse_regression_method(std::string_view name);

/// Values f(a, l_j) for a fixed list of l_j, filled for any a in one call.
class RegressionPanel {
 public:
  virtual ~RegressionPanel() = default;
  virtual std::size_t size() const = 0;
  virtual void eval(double a, double* out) const = 0;
};

class RegressionModel {
 public:
  virtual ~RegressionModel() = default;
  virtual std::size_t dim() const = 0;
  virtual double predict(std::span<const double> x) const = 0;
  /// Panel over the trailing coordinates; the first coordinate stays free.
  virtual std::unique_ptr<RegressionPanel> panel(const RowMatrix& tails) const;
  double lambda() const { return lambda_; }

 protected:
  double lambda_ = 0.0;
};

/// Fits one model per column of Y on the shared design X (rows = observations).
std::vector<std::shared_ptr<const RegressionModel>> fit_regression_multi(
    const RowMatrix& x, const RowMatrix& y, const RegressionConfig& config);

std::shared_ptr<const RegressionModel> fit_regression(const RowMatrix& x,
                                                      std::span<const double> y,
                                                      const RegressionConfig& config);

/// Model that ignores its input.
std::shared_ptr<const RegressionModel> constant_model(double value, std::size_t dim);

}  // namespace ivdrf
