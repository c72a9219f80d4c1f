#include "ivdrf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "ivdrf/error.hpp"
#include "ivdrf/nuisance.hpp"

namespace ivdrf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> column(const RowMatrix& m, Eigen::Index c) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, c);
  return v;
}

std::vector<double> distinct_values(const std::vector<double>& v, std::size_t limit) {
  std::set<double> s;
  for (double x : v) {
    s.insert(x);
    if (s.size() > limit) break;
  }
  return {s.begin(), s.end()};
}

std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
  const auto d = static_cast<std::size_t>(m.cols());
  return {d ? m.data() + static_cast<std::size_t>(i) * d : nullptr, d};
}

// Population variance of v.
double pop_var(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / n;
}

}  // namespace

RowMatrix quantile_l_grid(const Dataset& data, std::size_t per_dim, std::size_t cap,
                          std::size_t discrete_threshold) {
  const auto d = static_cast<Eigen::Index>(data.l_dim());
  if (d == 0) return RowMatrix(1, 0);
  require(per_dim >= 1 && cap >= 1, ErrorKind::invalid_argument, "L-grid needs at least one point");
  std::vector<std::vector<double>> cols;
  std::vector<char> discrete;
  for (Eigen::Index c = 0; c < d; ++c) {
    cols.push_back(column(data.l(), c));
    discrete.push_back(distinct_values(cols.back(), discrete_threshold).size() <= discrete_threshold);
  }
  // Shrink the continuous per-dimension count until the product respects the cap.
  std::size_t k = per_dim;
  std::vector<std::vector<double>> axes;
  for (;;) {
    axes.clear();
    std::size_t total = 1;
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto& v = cols[static_cast<std::size_t>(c)];
      std::vector<double> ax;
      if (discrete[static_cast<std::size_t>(c)]) {
        ax = distinct_values(v, discrete_threshold);
      } else {
        for (std::size_t q = 1; q <= k; ++q) ax.push_back(quantile(v, static_cast<double>(q) / (k + 1)));
      }
      total *= ax.size();
      axes.push_back(std::move(ax));
    }
    if (total <= cap || k == 1) break;
    --k;
  }
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.size();
  total = std::min(total, cap);
  RowMatrix grid(static_cast<Eigen::Index>(total), d);
  std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
  for (std::size_t r = 0; r < total; ++r) {
    for (Eigen::Index c = 0; c < d; ++c)
      grid(static_cast<Eigen::Index>(r), c) = axes[static_cast<std::size_t>(c)][idx[static_cast<std::size_t>(c)]];
    for (std::size_t c = idx.size(); c-- > 0;) {
      if (++idx[c] < axes[c].size()) break;
      idx[c] = 0;
    }
  }
  return grid;
}

RelevanceCurve chi2_divergence_curve(const Dataset& data, std::span<const double> a_grid, const RowMatrix& l_grid,
                                     const RelevanceConfig& config) {
  require(!a_grid.empty(), ErrorKind::invalid_argument, "relevance curve needs a nonempty a-grid");
  require(static_cast<std::size_t>(l_grid.cols()) == data.l_dim() && l_grid.rows() >= 1,
          ErrorKind::invalid_argument, "L-grid dimension does not match the data");
  const std::size_t n = data.size();
  const auto dl = static_cast<Eigen::Index>(data.l_dim());
  const auto dz = static_cast<Eigen::Index>(data.z_dim());
  const std::span<const double> a(data.a().data(), n);

  RowMatrix zl(static_cast<Eigen::Index>(n), dz + dl);
  zl.leftCols(dz) = data.z();
  if (dl > 0) zl.rightCols(dl) = data.l();
  const auto p_azl = CondDensityModel::fit(a, zl, config.density, data.treatment_support());
  const auto p_al = CondDensityModel::fit(a, data.l(), config.density, data.treatment_support());

  // Rows whose Z values represent Z | L = l for each grid l.
  std::vector<char> discrete(static_cast<std::size_t>(dl));
  std::vector<double> scale(static_cast<std::size_t>(dl), 1.0);
  for (Eigen::Index c = 0; c < dl; ++c) {
    const auto v = column(data.l(), c);
    discrete[static_cast<std::size_t>(c)] =
        distinct_values(v, config.density.discrete_threshold).size() <= config.density.discrete_threshold;
    const double sd = sample_sd(v);
    scale[static_cast<std::size_t>(c)] = sd > 0.0 ? sd : 1.0;
  }
  const auto nl = static_cast<std::size_t>(l_grid.rows());
  std::vector<std::vector<Index>> neigh(nl);
  for (std::size_t g = 0; g < nl; ++g) {
    std::vector<std::pair<double, Index>> cand;
    bool any_cont = false;
    for (std::size_t i = 0; i < n; ++i) {
      bool match = true;
      double dist = 0.0;
      for (Eigen::Index c = 0; c < dl; ++c) {
        const double diff = data.l()(static_cast<Eigen::Index>(i), c) - l_grid(static_cast<Eigen::Index>(g), c);
        if (discrete[static_cast<std::size_t>(c)]) {
          if (diff != 0.0) match = false;
        } else {
          any_cont = true;
          dist += (diff / scale[static_cast<std::size_t>(c)]) * (diff / scale[static_cast<std::size_t>(c)]);
        }
      }
      if (match) cand.emplace_back(dist, i);
    }
    if (any_cont && cand.size() > config.neighbours) {
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(config.neighbours), cand.end());
      cand.resize(config.neighbours);
      std::sort(cand.begin(), cand.end());
    }
    for (const auto& c : cand) neigh[g].push_back(c.second);
  }

  RelevanceCurve out;
  out.a_grid.assign(a_grid.begin(), a_grid.end());
  out.l_grid = l_grid;
  out.threshold = config.threshold;
  const std::size_t na = a_grid.size();
  out.divergence.assign(na, std::vector<double>(nl, kNaN));
  out.density_var.assign(na, std::vector<double>(nl, kNaN));
  out.floor_hit.assign(na, std::vector<char>(nl, 0));

  for_each_index(config.policy, na * nl, [&](std::size_t cell) {
    const std::size_t ia = cell / nl, g = cell % nl;
    const double av = a_grid[ia];
    const auto lrow = row_span(l_grid, static_cast<Eigen::Index>(g));
    const auto den = p_al.try_density(av, lrow);
    if (!den || !(*den > 1e-12) || neigh[g].empty()) {
      out.floor_hit[ia][g] = 1;
      return;
    }
    std::vector<double> x(static_cast<std::size_t>(dz + dl));
    std::copy(lrow.begin(), lrow.end(), x.begin() + dz);
    std::vector<double> dens;
    dens.reserve(neigh[g].size());
    for (Index i : neigh[g]) {
      const auto zr = data.z_row(i);
      std::copy(zr.begin(), zr.end(), x.begin());
      const auto p = p_azl.try_density(av, x);
      if (!p) {
        out.floor_hit[ia][g] = 1;
        return;
      }
      dens.push_back(*p);
    }
    out.density_var[ia][g] = pop_var(dens);
    for (double& p : dens) p /= *den;
    out.divergence[ia][g] = pop_var(dens);
  });

  out.min_divergence.assign(na, kNaN);
  out.mean_divergence.assign(na, kNaN);
  out.below_threshold.assign(na, 0);
  for (std::size_t ia = 0; ia < na; ++ia) {
    double mn = std::numeric_limits<double>::infinity(), s = 0.0;
    std::size_t c = 0;
    for (double v : out.divergence[ia])
      if (std::isfinite(v)) {
        mn = std::min(mn, v);
        s += v;
        ++c;
      }
    if (c == 0) continue;
    out.min_divergence[ia] = mn;
    out.mean_divergence[ia] = s / static_cast<double>(c);
    out.below_threshold[ia] = mn < config.threshold ? 1 : 0;
  }
  return out;
}

KappaModel KappaModel::fit(const Dataset& data, std::span<const double> zpi, const RegressionConfig& config) {
  require(zpi.size() == data.size(), ErrorKind::invalid_argument, "Z_pi length mismatch");
  KappaModel k;
  k.l_dim_ = data.l_dim();
  k.zpi_sd_ = sample_sd(zpi);
  k.m_z_ = fit_regression(design_al(data), zpi, config);
  if (k.l_dim_ == 0)
    k.rho_ = constant_model(mean(zpi), 0);
  else
    k.rho_ = fit_regression(data.l(), zpi, config);
  return k;
}

double KappaModel::operator()(double a, std::span<const double> l) const {
  require(l.size() == l_dim_, ErrorKind::invalid_argument, "covariate dimension mismatch");
  std::vector<double> x(l_dim_ + 1);
  x[0] = a;
  std::copy(l.begin(), l.end(), x.begin() + 1);
  return m_z_->predict(x) - rho_->predict(l);
}

UrwfVerdict check_urwf(const KappaModel& kappa, const RowMatrix& l_grid, const TargetInterval& interval,
                       double epsilon, const UrwfConfig& config) {
  UrwfVerdict v;
  v.interval = interval;
  v.l_grid = l_grid;
  v.epsilon = epsilon;
  if (!config.a_grid.empty()) {
    for (double x : config.a_grid)
      if (interval.contains(x)) v.a_grid.push_back(x);
    require(!v.a_grid.empty(), ErrorKind::invalid_argument, "no a-grid point falls inside the interval");
  } else {
    v.a_grid = interval.lo == interval.hi ? std::vector<double>{interval.lo} : interval.grid(config.a_points);
  }
  double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
  bool pos = false, neg = false;
  for (double a : v.a_grid)
    for (Eigen::Index g = 0; g < l_grid.rows(); ++g) {
      const double k = kappa(a, row_span(l_grid, g));
      mn = std::min(mn, std::abs(k));
      mx = std::max(mx, std::abs(k));
      if (k > 0.0) pos = true;
      else if (k < 0.0) neg = true;
      else pos = neg = true;
    }
  v.min_abs_kappa = mn;
  v.max_abs_kappa = mx;
  v.sign_constant = pos != neg;
  v.sign = v.sign_constant ? (pos ? 1 : -1) : 0;
  v.pass = v.sign_constant && mn >= epsilon;
  return v;
}

UrwfVerdict check_urwf(const Dataset& data, const WeightingFunction& pi, const TargetInterval& interval,
                       const UrwfConfig& config) {
  const auto zpi = pi.evaluate(data);
  const auto km = KappaModel::fit(data, zpi, config.regression);
  const auto grid = quantile_l_grid(data, config.l_per_dim, config.l_cap, config.regression.discrete_threshold);
  const double eps = config.epsilon.value_or(config.epsilon_scale * km.zpi_sd());
  auto v = check_urwf(km, grid, interval, eps, config);
  v.weighting_id = pi.id();
  return v;
}

KappaMap kappa_sign_map(const Dataset& data, const WeightingFunction& pi, std::span<const double> a_grid,
                        const RowMatrix& l_grid, const RegressionConfig& config, ExecPolicy policy) {
  require(static_cast<std::size_t>(l_grid.cols()) == data.l_dim(), ErrorKind::invalid_argument,
          "L-grid dimension does not match the data");
  const auto zpi = pi.evaluate(data);
  const auto km = KappaModel::fit(data, zpi, config);
  KappaMap m;
  m.a_grid.assign(a_grid.begin(), a_grid.end());
  m.l_grid = l_grid;
  const std::size_t na = a_grid.size(), nl = static_cast<std::size_t>(l_grid.rows());
  m.kappa.assign(na, std::vector<double>(nl, 0.0));
  for_each_index(policy, na * nl, [&](std::size_t cell) {
    const std::size_t ia = cell / nl, g = cell % nl;
    m.kappa[ia][g] = km(a_grid[ia], row_span(l_grid, static_cast<Eigen::Index>(g)));
  });
  m.crossing.assign(na, std::vector<char>(nl, 0));
  m.l_has_crossing.assign(nl, 0);
  for (std::size_t ia = 0; ia + 1 < na; ++ia)
    for (std::size_t g = 0; g < nl; ++g) {
      const double k0 = m.kappa[ia][g], k1 = m.kappa[ia + 1][g];
      if (k0 == 0.0 || (k0 > 0.0) != (k1 > 0.0)) {
        m.crossing[ia][g] = 1;
        m.l_has_crossing[g] = 1;
      }
    }
  return m;
}

bool CoverPlan::covers() const {
  if (members.empty()) return false;
  // Sweep: the covered prefix starting below lo must extend past hi without gaps.
  std::vector<std::pair<double, double>> iv;
  for (const auto& m : members) iv.emplace_back(m.center - m.radius, m.center + m.radius);
  std::sort(iv.begin(), iv.end());
  double reach = lo;
  bool started = false;
  for (const auto& [a, b] : iv) {
    if (!started) {
      if (a < lo && b > lo) {
        started = true;
        reach = b;
      }
      continue;
    }
    if (a < reach) reach = std::max(reach, b);
  }
  return started && reach > hi;
}

CoverPlan cover_interval(const Dataset& data, double lo, double hi, const CoverConfig& config) {
  const Support s = data.treatment_support();
  require(s.lo < lo && lo <= hi && hi < s.hi, ErrorKind::invalid_argument,
          "compact set must lie strictly inside the treatment support");
  require(config.initial_radius > 0.0 && config.min_radius > 0.0 && config.growth > 1.0,
          ErrorKind::invalid_argument, "cover radii must be positive and growth above 1");
  CoverPlan plan;
  plan.lo = lo;
  plan.hi = hi;
  const auto grid = quantile_l_grid(data, config.urwf.l_per_dim, config.urwf.l_cap,
                                    config.urwf.regression.discrete_threshold);
  double c = lo;
  while (true) {
    require(plan.members.size() < config.max_members, ErrorKind::coverage_gap,
            "cover exceeded " + std::to_string(config.max_members) + " members near a=" + format_double(c));
    auto pi = make_density_rwf(data, c, config.density);
    const auto zpi = pi.evaluate(data);
    const auto km = KappaModel::fit(data, zpi, config.urwf.regression);
    const double eps = config.urwf.epsilon.value_or(config.urwf.epsilon_scale * km.zpi_sd());
    auto check = [&](double r) {
      const TargetInterval iv(std::max(c - r, s.lo), std::min(c + r, s.hi));
      return check_urwf(km, grid, iv, eps, config.urwf);
    };
    double r = config.initial_radius;
    UrwfVerdict v = check(r);
    while (!v.pass) {
      r *= 0.5;
      if (r < config.min_radius)
        fail(ErrorKind::coverage_gap, "no weighting function passes the uniform check around a=" + format_double(c));
      v = check(r);
    }
    while (c + r <= hi) {
      const double bigger = r * config.growth;
      auto vb = check(bigger);
      if (vb.pass) {
        r = bigger;
        v = std::move(vb);
        continue;
      }
      const double mid = 0.5 * (r + bigger);
      auto vm = check(mid);
      if (vm.pass) {
        r = mid;
        v = std::move(vm);
      }
      break;
    }
    v.weighting_id = pi.id();
    plan.members.push_back({c, r, std::move(pi), std::move(v)});
    if (c + r > hi) break;
    c += r;
  }
  return plan;
}

AivReport aiv_weight_check(const Dataset& data, const LatentTreatmentModel& model, const WeightingFunction& pi,
                           double a, std::size_t l_bins, double tolerance) {
  require(data.latent_u().has_value(), ErrorKind::misuse, "AIV weight check needs simulated data with latent U");
  require(l_bins >= 1, ErrorKind::invalid_argument, "need at least one L bin");
  const std::size_t n = data.size();
  const RowMatrix& u = *data.latent_u();
  std::vector<double> omega(n);
  for_each_index(ExecPolicy::parallel, n, [&](std::size_t i) {
    omega[i] = model.omega(a, row_span(u, static_cast<Eigen::Index>(i)), data.l_row(i), pi);
  });

  // Bin on the first covariate: one bin per value when few distinct values exist.
  std::vector<std::size_t> bin(n, 0);
  AivReport rep;
  rep.a = a;
  rep.tolerance = tolerance;
  std::vector<std::pair<double, double>> edges;
  if (data.l_dim() == 0) {
    edges.emplace_back(-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  } else {
    const auto l0 = column(data.l(), 0);
    const auto vals = distinct_values(l0, l_bins);
    if (vals.size() <= l_bins) {
      for (double v : vals) edges.emplace_back(v, v);
      for (std::size_t i = 0; i < n; ++i)
        bin[i] = static_cast<std::size_t>(std::lower_bound(vals.begin(), vals.end(), l0[i]) - vals.begin());
    } else {
      std::vector<double> cuts{-std::numeric_limits<double>::infinity()};
      for (std::size_t b = 1; b < l_bins; ++b) cuts.push_back(quantile(l0, static_cast<double>(b) / l_bins));
      cuts.push_back(std::numeric_limits<double>::infinity());
      for (std::size_t b = 0; b < l_bins; ++b) edges.emplace_back(cuts[b], cuts[b + 1]);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t b = 0;
        while (b + 1 < l_bins && l0[i] > cuts[b + 1]) ++b;
        bin[i] = b;
      }
    }
  }
  rep.bins.resize(edges.size());
  std::vector<double> s(edges.size(), 0.0), s2(edges.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& b = rep.bins[bin[i]];
    ++b.count;
    s[bin[i]] += omega[i];
    b.max_abs_dev = std::max(b.max_abs_dev, std::abs(omega[i] - 1.0));
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto& b = rep.bins[k];
    b.l_lo = edges[k].first;
    b.l_hi = edges[k].second;
    if (b.count == 0) continue;
    b.mean = s[k] / static_cast<double>(b.count);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double d = omega[i] - rep.bins[bin[i]].mean;
    s2[bin[i]] += d * d;
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto& b = rep.bins[k];
    if (b.count >= 2) b.se = std::sqrt(s2[k] / static_cast<double>(b.count - 1) / static_cast<double>(b.count));
    b.mean_deviates = b.count > 0 && std::abs(b.mean - 1.0) > 3.0 * b.se + tolerance;
    rep.max_abs_dev = std::max(rep.max_abs_dev, b.max_abs_dev);
  }
  rep.violation = rep.max_abs_dev > tolerance;
  return rep;
}

}  // namespace ivdrf
