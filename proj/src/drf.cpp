#include "ivdrf/drf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

#include "ivdrf/error.hpp"
#include "ivdrf/rng.hpp"

namespace ivdrf {

DrfMethod parse_drf_method(std::string_view name) {
  if (name == "llkr") return DrfMethod::llkr;
  if (name == "erm" || name == "erm_spline") return DrfMethod::erm_spline;
  fail(ErrorKind::invalid_argument, "unknown DRF method '" + std::string(name) + "'");
}

std::string_view to_string(DrfMethod m) { return m == DrfMethod::llkr ? "llkr" : "erm_spline"; }

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

VarianceEstimate estimate_variance(double at, double theta_hat, std::span<const double> residual_sq,
                                   std::span<const double> a, const CondDensityModel& p_a, KernelId kernel,
                                   double h, double z_crit) {
  VarianceEstimate v;
  const LocalLinearSmoother sm(a, residual_sq, kernel);
  v.var = sm.predict(at, h);
  if (!(v.var > 0.0)) {
    v.var = 0.0;
    v.degenerate = true;
  }
  const double pa = p_a.density(at, {});
  require(pa > 1e-4, ErrorKind::low_density,
          "treatment density too small for a variance estimate at a=" + format_double(at));
  v.sigma = std::sqrt(kernel_constants(kernel).int_k2 / pa * v.var);
  const double nh = static_cast<double>(p_a.size()) * h;
  v.se = v.sigma / std::sqrt(nh);
  v.lo = theta_hat - z_crit * v.se;
  v.hi = theta_hat + z_crit * v.se;
  return v;
}

double plugin_bias(std::span<const double> grid, std::span<const double> theta, std::size_t i, KernelId kernel,
                   double h) {
  require(grid.size() == theta.size(), ErrorKind::invalid_argument, "grid and curve differ in length");
  if (i == 0 || i + 1 >= grid.size())
    fail(ErrorKind::unavailable, "plug-in bias needs neighbours on both sides of the grid point");
  const double x0 = grid[i - 1], x1 = grid[i], x2 = grid[i + 1];
  const double d2 = 2.0 * ((theta[i + 1] - theta[i]) / (x2 - x1) - (theta[i] - theta[i - 1]) / (x1 - x0)) / (x2 - x0);
  return 0.5 * h * h * d2 * kernel_constants(kernel).int_ks2;
}

DrfEstimate estimate_drf_llkr(std::span<const double> scores, std::span<const double> a,
                              const TargetInterval& interval, const DrfConfig& cfg, ExecPolicy policy) {
  require(scores.size() == a.size() && !a.empty(), ErrorKind::invalid_argument,
          "scores and treatments must be nonempty and equal length");
  require(cfg.grid_size >= 2, ErrorKind::invalid_argument, "DRF grid needs at least 2 points");
  DrfEstimate est;
  est.method = DrfMethod::llkr;
  est.kernel = cfg.kernel;
  est.n = a.size();
  est.grid = interval.grid(cfg.grid_size);
  if (cfg.h) {
    est.h = *cfg.h;
  } else {
    const auto grid = cfg.h_grid.empty() ? default_bandwidth_grid(a, cfg.h_grid_count) : cfg.h_grid;
    est.bandwidth = select_bandwidth(scores, a, interval, grid, cfg.kernel, cfg.objective, policy);
    est.h = est.bandwidth->h;
  }
  const double h = est.h;
  const std::size_t g = est.grid.size();
  est.theta.assign(g, kNaN);
  est.missing.assign(g, 0);
  est.point_errors.assign(g, "");
  const LocalLinearSmoother sm(a, scores, cfg.kernel);
  for_each_index(policy, g, [&](std::size_t i) {
    try {
      est.theta[i] = sm.predict(est.grid[i], h);
    } catch (const Error& e) {
      est.missing[i] = 1;
      est.point_errors[i] = e.what();
    }
  });
  est.bias.assign(g, kNaN);
  for (std::size_t i = 1; i + 1 < g; ++i)
    if (!est.missing[i - 1] && !est.missing[i] && !est.missing[i + 1])
      est.bias[i] = plugin_bias(est.grid, est.theta, i, cfg.kernel, h);

  if (cfg.variance) {
    std::vector<double> ra, rsq;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] < interval.lo - h || a[i] > interval.hi + h) continue;
      try {
        const double r = scores[i] - sm.predict(a[i], h);
        ra.push_back(a[i]);
        rsq.push_back(r * r);
      } catch (const Error&) {
      }
    }
    const auto p_a = CondDensityModel::fit(a, RowMatrix(static_cast<Eigen::Index>(a.size()), 0), cfg.density);
    est.sigma.assign(g, kNaN);
    est.se.assign(g, kNaN);
    est.ci_lo.assign(g, kNaN);
    est.ci_hi.assign(g, kNaN);
    est.degenerate_variance.assign(g, 0);
    if (ra.size() >= 2) {
      for_each_index(policy, g, [&](std::size_t i) {
        if (est.missing[i]) return;
        try {
          const auto v = estimate_variance(est.grid[i], est.theta[i], rsq, ra, p_a, cfg.kernel, h, cfg.z_crit);
          est.sigma[i] = v.sigma;
          est.se[i] = v.se;
          est.ci_lo[i] = v.lo;
          est.ci_hi[i] = v.hi;
          est.degenerate_variance[i] = v.degenerate ? 1 : 0;
        } catch (const Error& e) {
          est.point_errors[i] = std::string("variance: ") + e.what();
        }
      });
    }
  }
  return est;
}

NaturalSplineBasis::NaturalSplineBasis(std::span<const double> x, int df) {
  require(df >= 1, ErrorKind::invalid_argument, "natural spline needs df >= 1");
  require(x.size() >= 2, ErrorKind::insufficient_support, "natural spline needs at least 2 points");
  const double lo = *std::min_element(x.begin(), x.end());
  const double hi = *std::max_element(x.begin(), x.end());
  require(hi > lo, ErrorKind::conditioning, "natural spline input has zero range");
  knots_.push_back(lo);
  for (int k = 1; k < df; ++k) knots_.push_back(quantile(x, static_cast<double>(k) / df));
  knots_.push_back(hi);
  for (std::size_t k = 1; k < knots_.size(); ++k)
    require(knots_[k] > knots_[k - 1], ErrorKind::conditioning, "natural spline knots are not distinct");
}

void NaturalSplineBasis::eval(double x, double* out) const {
  const std::size_t kk = knots_.size();
  out[0] = 1.0;
  out[1] = x;
  auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
  auto d = [&](std::size_t k) {
    return (cube(x - knots_[k]) - cube(x - knots_[kk - 1])) / (knots_[kk - 1] - knots_[k]);
  };
  if (kk < 3) return;
  const double dlast = d(kk - 2);
  for (std::size_t k = 0; k + 2 < kk; ++k) out[k + 2] = d(k) - dlast;
}

DrfEstimate estimate_drf_erm(std::span<const double> scores, std::span<const double> a,
                             const TargetInterval& interval, const DrfConfig& cfg) {
  require(scores.size() == a.size(), ErrorKind::invalid_argument, "scores and treatments differ in length");
  std::vector<double> xa, ys;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (interval.contains(a[i])) {
      xa.push_back(a[i]);
      ys.push_back(scores[i]);
    }
  require(xa.size() >= static_cast<std::size_t>(cfg.spline_df) + 2, ErrorKind::insufficient_support,
          "spline ERM needs at least df + 2 rows inside the interval");
  const NaturalSplineBasis basis(xa, cfg.spline_df);
  const auto p = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(xa.size()), p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(xa.size()));
  std::vector<double> row(basis.size());
  for (std::size_t i = 0; i < xa.size(); ++i) {
    basis.eval(xa[i], row.data());
    for (Eigen::Index c = 0; c < p; ++c) x(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
    y[static_cast<Eigen::Index>(i)] = ys[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-12);
  require(qr.rank() == p, ErrorKind::conditioning, "natural spline design is rank deficient");
  const Eigen::VectorXd beta = qr.solve(y);

  DrfEstimate est;
  est.method = DrfMethod::erm_spline;
  est.kernel = cfg.kernel;
  est.spline_df = cfg.spline_df;
  est.n = a.size();
  est.grid = interval.grid(cfg.grid_size);
  est.theta.resize(est.grid.size());
  est.missing.assign(est.grid.size(), 0);
  est.point_errors.assign(est.grid.size(), "");
  est.bias.assign(est.grid.size(), kNaN);
  for (std::size_t i = 0; i < est.grid.size(); ++i) {
    basis.eval(est.grid[i], row.data());
    double s = 0.0;
    for (Eigen::Index c = 0; c < p; ++c) s += beta[c] * row[static_cast<std::size_t>(c)];
    est.theta[i] = s;
  }
  return est;
}

BootstrapResult bootstrap_drf(const Dataset& data,
                              const std::function<DrfEstimate(const Dataset&, std::uint64_t)>& pipeline,
                              std::size_t replicates, std::uint64_t seed, ExecPolicy policy) {
  require(replicates >= 2, ErrorKind::invalid_argument, "bootstrap needs at least 2 replicates");
  const std::size_t n = data.size();
  std::vector<std::vector<double>> curves(replicates);
  std::vector<std::vector<double>> grids(replicates);
  std::vector<std::string> errors(replicates);
  for_each_index(policy, replicates, [&](std::size_t b) {
    Rng rng = make_rng(seed, 31, b);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<Index> rows(n);
    for (auto& r : rows) r = pick(rng);
    try {
      auto est = pipeline(data.subset(rows), derive_seed(seed, 32, b));
      grids[b] = est.grid;
      curves[b] = est.theta;
      for (std::size_t i = 0; i < est.missing.size(); ++i)
        if (est.missing[i]) curves[b][i] = kNaN;
    } catch (const Error& e) {
      errors[b] = e.what();
    }
  });
  BootstrapResult res;
  res.replicates = replicates;
  for (std::size_t b = 0; b < replicates; ++b)
    if (!errors[b].empty()) {
      ++res.failures;
      res.failure_messages.push_back("replicate " + std::to_string(b) + ": " + errors[b]);
    }
  if (static_cast<double>(res.failures) > 0.2 * static_cast<double>(replicates)) {
    fail(ErrorKind::bootstrap, std::to_string(res.failures) + " of " + std::to_string(replicates) +
                                   " bootstrap replicates failed; first: " + res.failure_messages.front());
  }
  for (std::size_t b = 0; b < replicates; ++b)
    if (errors[b].empty()) {
      res.grid = grids[b];
      break;
    }
  const std::size_t g = res.grid.size();
  res.sd.assign(g, kNaN);
  res.lo.assign(g, kNaN);
  res.hi.assign(g, kNaN);
  for (std::size_t i = 0; i < g; ++i) {
    std::vector<double> v;
    for (std::size_t b = 0; b < replicates; ++b)
      if (errors[b].empty() && i < curves[b].size() && std::isfinite(curves[b][i])) v.push_back(curves[b][i]);
    if (v.size() < 2) continue;
    res.sd[i] = sample_sd(v);
    res.lo[i] = quantile(v, 0.025);
    res.hi[i] = quantile(v, 0.975);
  }
  return res;
}

}  // namespace ivdrf
