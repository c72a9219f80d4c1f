#include "ivdrf/weighting.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "ivdrf/error.hpp"

namespace ivdrf {

WeightingFunction::WeightingFunction(WeightingKind kind, std::string id, double bound, Fn fn)
    : kind_(kind), id_(std::move(id)), bound_(bound), fn_(std::move(fn)) {
  require(bound > 0.0 && std::isfinite(bound), ErrorKind::invalid_argument,
          "weighting function bound must be positive and finite");
  require(static_cast<bool>(fn_), ErrorKind::invalid_argument, "weighting function is empty");
}

WeightingFunction WeightingFunction::coordinate(std::size_t j, double bound) {
  return {WeightingKind::raw_coordinate, "coordinate:" + std::to_string(j), bound,
          [j](std::span<const double> z, std::span<const double>) {
            require(j < z.size(), ErrorKind::invalid_argument, "instrument coordinate out of range");
            return z[j];
          }};
}

WeightingFunction WeightingFunction::polynomial(std::size_t j, int degree, double bound) {
  require(degree >= 1, ErrorKind::invalid_argument, "polynomial degree must be at least 1");
  return {WeightingKind::polynomial, "poly:" + std::to_string(j) + ":" + std::to_string(degree),
          bound, [j, degree](std::span<const double> z, std::span<const double>) {
            require(j < z.size(), ErrorKind::invalid_argument, "instrument coordinate out of range");
            return std::pow(z[j], degree);
          }};
}

WeightingFunction WeightingFunction::custom(std::string id, double bound, Fn fn) {
  return {WeightingKind::custom, std::move(id), bound, std::move(fn)};
}

WeightingFunction WeightingFunction::table(std::string id,
                                           std::map<std::vector<double>, double> values) {
  require(!values.empty(), ErrorKind::invalid_argument, "weighting table is empty");
  double bound = 0.0;
  for (const auto& [k, v] : values) bound = std::max(bound, std::abs(v));
  auto shared = std::make_shared<const std::map<std::vector<double>, double>>(std::move(values));
  return {WeightingKind::custom, std::move(id), std::max(bound, 1e-12),
          [shared](std::span<const double> z, std::span<const double> l) {
            std::vector<double> key(z.begin(), z.end());
            key.insert(key.end(), l.begin(), l.end());
            auto it = shared->find(key);
            require(it != shared->end(), ErrorKind::invalid_argument,
                    "weighting table has no entry for the queried (z, l)");
            return it->second;
          }};
}

double WeightingFunction::operator()(std::span<const double> z, std::span<const double> l) const {
  const double v = fn_(z, l);
  require(std::isfinite(v), ErrorKind::invalid_argument,
          "weighting function '" + id_ + "' returned a non-finite value");
  return std::clamp(v, -bound_, bound_);
}

std::vector<double> WeightingFunction::evaluate(const Dataset& data) const {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = (*this)(data.z_row(i), data.l_row(i));
  return out;
}

namespace {

RowMatrix zl_matrix(const Dataset& d) {
  RowMatrix x(static_cast<Eigen::Index>(d.size()),
              static_cast<Eigen::Index>(d.z_dim() + d.l_dim()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < d.z_dim(); ++j) x(ii, static_cast<Eigen::Index>(j)) = d.z()(ii, static_cast<Eigen::Index>(j));
    for (std::size_t j = 0; j < d.l_dim(); ++j)
      x(ii, static_cast<Eigen::Index>(d.z_dim() + j)) = d.l()(ii, static_cast<Eigen::Index>(j));
  }
  return x;
}

double parse_real(std::string_view s, const std::string& spec) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last, ErrorKind::invalid_argument,
          "cannot parse number in weighting spec '" + spec + "'");
  return v;
}

}  // namespace

WeightingFunction make_density_rwf(const Dataset& train, double a0, const DensityConfig& config) {
  const Support s = train.treatment_support();
  require(s.lo < a0 && a0 < s.hi, ErrorKind::invalid_argument,
          "density weighting anchor must lie strictly inside the treatment support");
  const std::vector<double> a(train.a().data(), train.a().data() + train.size());
  auto cond = std::make_shared<const CondDensityModel>(
      CondDensityModel::fit(a, zl_matrix(train), config, s));
  const double marginal =
      CondDensityModel::fit(a, RowMatrix(static_cast<Eigen::Index>(train.size()), 0), config, s)
          .density(a0, {});
  double maxv = marginal;
  std::vector<double> x(train.z_dim() + train.l_dim());
  for (std::size_t i = 0; i < train.size(); ++i) {
    std::copy(train.z_row(i).begin(), train.z_row(i).end(), x.begin());
    std::copy(train.l_row(i).begin(), train.l_row(i).end(), x.begin() + static_cast<std::ptrdiff_t>(train.z_dim()));
    if (auto v = cond->try_density(a0, x)) maxv = std::max(maxv, *v);
  }
  WeightingFunction w(WeightingKind::conditional_density, "density@" + format_double(a0),
                      1.5 * std::max(maxv, 1e-12),
                      [cond, marginal, a0](std::span<const double> z, std::span<const double> l) {
                        std::vector<double> x(z.begin(), z.end());
                        x.insert(x.end(), l.begin(), l.end());
                        auto v = cond->try_density(a0, x);
                        return v ? *v : marginal;
                      });
  w.set_anchor(a0);
  return w;
}

WeightingFunction parse_weighting_spec(const std::string& spec, const Dataset& data,
                                       const DensityConfig& config) {
  auto max_abs = [&](const WeightingFunction::Fn& f) {
    double m = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) m = std::max(m, std::abs(f(data.z_row(i), data.l_row(i))));
    return 1.5 * std::max(m, 1e-12);
  };
  if (spec.rfind("density@", 0) == 0) {
    return make_density_rwf(data, parse_real(std::string_view(spec).substr(8), spec), config);
  }
  if (spec.rfind("coordinate:", 0) == 0) {
    const auto j = static_cast<std::size_t>(parse_real(std::string_view(spec).substr(11), spec));
    require(j < data.z_dim(), ErrorKind::invalid_argument,
            "weighting spec '" + spec + "' names a missing instrument coordinate");
    const double bound = max_abs([j](std::span<const double> z, std::span<const double>) { return z[j]; });
    return WeightingFunction::coordinate(j, bound);
  }
  if (spec.rfind("poly:", 0) == 0) {
    const auto rest = std::string_view(spec).substr(5);
    const auto colon = rest.find(':');
    require(colon != std::string_view::npos, ErrorKind::invalid_argument,
            "weighting spec '" + spec + "' must be poly:j:degree");
    const auto j = static_cast<std::size_t>(parse_real(rest.substr(0, colon), spec));
    const int deg = static_cast<int>(parse_real(rest.substr(colon + 1), spec));
    require(j < data.z_dim(), ErrorKind::invalid_argument,
            "weighting spec '" + spec + "' names a missing instrument coordinate");
    const double bound = max_abs([j, deg](std::span<const double> z, std::span<const double>) {
      return std::pow(z[j], deg);
    });
    return WeightingFunction::polynomial(j, deg, bound);
  }
  if (spec.rfind("constant:", 0) == 0) {
    const double c = parse_real(std::string_view(spec).substr(9), spec);
    return WeightingFunction::custom(spec, std::max(std::abs(c), 1e-12),
                                     [c](std::span<const double>, std::span<const double>) { return c; });
  }
  fail(ErrorKind::invalid_argument, "unknown weighting spec '" + spec +
                                        "' (expected density@a0, coordinate:j, poly:j:deg or constant:c)");
}

}  // namespace ivdrf
