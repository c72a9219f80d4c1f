#include "ivdrf/density.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ivdrf/error.hpp"

namespace ivdrf {

namespace {

bool few_levels(std::span<const double> v, std::size_t threshold) {
  std::set<double> s;
  for (double x : v) {
    s.insert(x);
    if (s.size() > threshold) return false;
  }
  return true;
}

double spread(std::span<const double> v) {
  const double sd = sample_sd(v);
  return sd > 0.0 ? sd : 1.0;
}

}  // namespace

CondDensityModel CondDensityModel::fit(std::span<const double> a, const RowMatrix& x,
                                       const DensityConfig& config,
                                       std::optional<Support> support) {
  const std::size_t n = a.size();
  require(n >= 2, ErrorKind::insufficient_support, "conditional density needs at least 2 rows");
  require(static_cast<std::size_t>(x.rows()) == n, ErrorKind::invalid_argument,
          "density covariates and responses differ in length");
  require(config.bandwidth_multiplier > 0.0, ErrorKind::invalid_argument,
          "density bandwidth multiplier must be positive");
  CondDensityModel m;
  const auto d = static_cast<std::size_t>(x.cols());
  m.a_discrete_ = few_levels(a, config.discrete_threshold);
  m.x_discrete_.assign(d, 0);
  std::vector<std::vector<double>> cols(d, std::vector<double>(n));
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) cols[k][i] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    m.x_discrete_[k] = few_levels(cols[k], config.discrete_threshold) ? 1 : 0;
  }
  std::size_t continuous = m.a_discrete_ ? 0 : 1;
  for (char c : m.x_discrete_) continuous += c ? 0 : 1;
  const double rate = continuous > 0
                          ? std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(continuous) + 4.0))
                          : 1.0;
  m.b_ = m.a_discrete_ ? 0.0 : config.bandwidth_multiplier * 2.34 * spread(a) * rate;
  m.c_.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k)
    if (!m.x_discrete_[k]) m.c_[k] = config.bandwidth_multiplier * 2.34 * spread(cols[k]) * rate;

  // Sort by the first continuous covariate (the window coordinate), else by A.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t wcol = d;
  for (std::size_t k = 0; k < d; ++k)
    if (!m.x_discrete_[k]) {
      wcol = k;
      break;
    }
  if (wcol < d) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return cols[wcol][i] < cols[wcol][j]; });
  } else {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  }
  m.a_.resize(n);
  m.x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    m.a_[r] = a[order[r]];
    for (std::size_t k = 0; k < d; ++k)
      m.x_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = cols[k][order[r]];
  }
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  m.support_ = support.value_or(Support{*amin, *amax});
  m.reflect_ = config.reflect && !m.a_discrete_;
  m.min_den_ = config.min_denominator;
  return m;
}

std::optional<double> CondDensityModel::try_density(double a, std::span<const double> x) const {
  const auto d = static_cast<std::size_t>(x_.cols());
  require(x.size() == d, ErrorKind::invalid_argument, "density query has the wrong covariate dimension");
  std::size_t wcol = d;
  for (std::size_t k = 0; k < d; ++k)
    if (!x_discrete_[k]) {
      wcol = k;
      break;
    }
  const std::size_t n = a_.size();

  auto response_term = [&](double ai) {
    if (a_discrete_) return ai == a ? 1.0 : 0.0;
    double t = epan((ai - a) / b_);
    if (reflect_) {
      t += epan((ai - (2.0 * support_.lo - a)) / b_);
      t += epan((ai - (2.0 * support_.hi - a)) / b_);
    }
    return t / b_;
  };
  auto covariate_weight = [&](std::size_t r) {
    double w = 1.0;
    for (std::size_t k = 0; k < d && w > 0.0; ++k) {
      const double xv = x_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      if (x_discrete_[k])
        w *= (xv == x[k]) ? 1.0 : 0.0;
      else
        w *= epan((xv - x[k]) / c_[k]);
    }
    return w;
  };

  double num = 0.0, den = 0.0;
  if (wcol < d) {
    const double lo = x[wcol] - c_[wcol], hi = x[wcol] + c_[wcol];
    // Rows are sorted by column wcol; binary search on it.
    std::size_t first = 0, count = n;
    while (count > 0) {
      const std::size_t step = count / 2;
      if (x_(static_cast<Eigen::Index>(first + step), static_cast<Eigen::Index>(wcol)) < lo) {
        first += step + 1;
        count -= step + 1;
      } else {
        count = step;
      }
    }
    for (std::size_t r = first; r < n && x_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(wcol)) <= hi; ++r) {
      const double w = covariate_weight(r);
      if (w <= 0.0) continue;
      den += w;
      num += w * response_term(a_[r]);
    }
  } else if (!a_discrete_) {
    // Covariates all discrete (or absent): scan the A-window(s) for the numerator.
    const double centers[3] = {a, 2.0 * support_.lo - a, 2.0 * support_.hi - a};
    const int windows = reflect_ ? 3 : 1;
    if (d == 0)
      den = static_cast<double>(n);
    else
      for (std::size_t r = 0; r < n; ++r) den += covariate_weight(r);
    for (int c = 0; c < windows; ++c) {
      auto it = std::lower_bound(a_.begin(), a_.end(), centers[c] - b_);
      for (auto r = static_cast<std::size_t>(it - a_.begin()); r < n && a_[r] <= centers[c] + b_; ++r) {
        const double w = covariate_weight(r);
        if (w > 0.0) num += w * epan((a_[r] - centers[c]) / b_) / b_;
      }
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      const double w = covariate_weight(r);
      if (w <= 0.0) continue;
      den += w;
      num += w * response_term(a_[r]);
    }
  }
  if (!(den >= min_den_)) return std::nullopt;
  return num / den;
}

double CondDensityModel::density(double a, std::span<const double> x) const {
  auto v = try_density(a, x);
  if (!v) {
    std::string where;
    for (double xi : x) where += (where.empty() ? "" : ",") + format_double(xi);
    fail(ErrorKind::low_density, "conditioning mass below floor at covariates (" + where + ")");
  }
  return *v;
}

}  // namespace ivdrf
