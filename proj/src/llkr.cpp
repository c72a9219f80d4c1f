#include "ivdrf/llkr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ivdrf/error.hpp"

namespace ivdrf {

LocalLinearSmoother::LocalLinearSmoother(std::span<const double> a, std::span<const double> s,
                                         KernelId kernel)
    : kernel_(kernel) {
  require(a.size() == s.size(), ErrorKind::invalid_argument,
          "treatments and responses differ in length");
  require(!a.empty(), ErrorKind::empty_data, "no points to smooth");
  const std::size_t n = a.size();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  a_.resize(n);
  s_.resize(n);
  rank_.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    a_[r] = a[order_[r]];
    s_[r] = s[order_[r]];
    rank_[order_[r]] = r;
  }
}

LocalLinearSmoother::Sums LocalLinearSmoother::window_sums(double a, double h) const {
  Sums sums;
  const double inv_h = 1.0 / h;
  auto it = std::lower_bound(a_.begin(), a_.end(), a - h);
  sums.a_min = std::numeric_limits<double>::infinity();
  sums.a_max = -std::numeric_limits<double>::infinity();
  for (auto r = static_cast<std::size_t>(it - a_.begin()); r < a_.size() && a_[r] <= a + h; ++r) {
    const double u = (a_[r] - a) * inv_h;
    const double k = kernel_eval(kernel_, u);
    if (k <= 0.0) continue;
    const double ku = k * u;
    sums.s0 += k;
    sums.s1 += ku;
    sums.s2 += ku * u;
    sums.t0 += k * s_[r];
    sums.t1 += ku * s_[r];
    ++sums.count;
    sums.a_min = std::min(sums.a_min, a_[r]);
    sums.a_max = std::max(sums.a_max, a_[r]);
  }
  return sums;
}

void LocalLinearSmoother::check(const Sums& s, double a, double h) const {
  if (s.count < 2 || !(s.a_max > s.a_min)) {
    fail(ErrorKind::insufficient_support,
         "fewer than 2 distinct treatment values within h=" + format_double(h) + " of a=" +
             format_double(a));
  }
  const double det = s.s0 * s.s2 - s.s1 * s.s1;
  const double scale = s.s0 * s.s2;
  if (!(det > 1e-13 * scale)) {
    std::ostringstream msg;
    msg << "singular local linear normal matrix at a=" << format_double(a)
        << " h=" << format_double(h) << " (reciprocal condition estimate "
        << (scale > 0 ? det / scale : 0.0) << ")";
    fail(ErrorKind::rank_deficiency, msg.str());
  }
}

LlkrFit LocalLinearSmoother::fit(double a, double h, bool with_weights) const {
  require(h > 0.0 && std::isfinite(h), ErrorKind::invalid_argument, "bandwidth must be positive");
  const Sums s = window_sums(a, h);
  check(s, a, h);
  const double det = s.s0 * s.s2 - s.s1 * s.s1;
  LlkrFit out;
  out.a = a;
  out.h = h;
  out.intercept = (s.s2 * s.t0 - s.s1 * s.t1) / det;
  out.slope = (s.s0 * s.t1 - s.s1 * s.t0) / det / h;
  out.effective_n = s.count;
  if (with_weights) {
    out.weights.assign(a_.size(), 0.0);
    auto it = std::lower_bound(a_.begin(), a_.end(), a - h);
    for (auto r = static_cast<std::size_t>(it - a_.begin()); r < a_.size() && a_[r] <= a + h;
         ++r) {
      const double u = (a_[r] - a) / h;
      const double k = kernel_eval(kernel_, u);
      out.weights[order_[r]] = k * (s.s2 - s.s1 * u) / det;
    }
  }
  return out;
}

double LocalLinearSmoother::predict(double a, double h) const {
  const Sums s = window_sums(a, h);
  check(s, a, h);
  return (s.s2 * s.t0 - s.s1 * s.t1) / (s.s0 * s.s2 - s.s1 * s.s1);
}

LocalLinearSmoother::InSample LocalLinearSmoother::in_sample(std::size_t i, double h) const {
  const double a = a_[rank_[i]];
  const Sums s = window_sums(a, h);
  check(s, a, h);
  const double det = s.s0 * s.s2 - s.s1 * s.s1;
  return {(s.s2 * s.t0 - s.s1 * s.t1) / det, kernel_eval(kernel_, 0.0) * s.s2 / det};
}

LlkrFit llkr_fit(std::span<const double> a, std::span<const double> s, double at, double h,
                 KernelId kernel) {
  return LocalLinearSmoother(a, s, kernel).fit(at, h, true);
}

double leverage(std::span<const double> a, std::size_t i, double h, KernelId kernel) {
  std::vector<double> zeros(a.size(), 0.0);
  return LocalLinearSmoother(a, zeros, kernel).in_sample(i, h).leverage;
}

// ---------------------------------------------------------------------------

namespace {

struct CvTerms {
  double rss = 0.0;       // sum of squared plain residuals over the interval
  double loo = 0.0;       // sum of squared leave-one-out residuals
  double trace = 0.0;     // sum of leverages
  std::size_t used = 0;
  std::vector<std::size_t> excluded;
};

}  // namespace

BandwidthReport select_bandwidth(std::span<const double> scores, std::span<const double> a,
                                 const TargetInterval& interval, std::span<const double> h_grid,
                                 KernelId kernel, BandwidthObjective objective,
                                 ExecPolicy policy) {
  require(!h_grid.empty(), ErrorKind::invalid_argument, "bandwidth grid is empty");
  for (double h : h_grid)
    require(h > 0.0 && std::isfinite(h), ErrorKind::invalid_argument,
            "bandwidth grid values must be positive");
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (interval.contains(a[i])) inside.push_back(i);
  require(inside.size() >= 2, ErrorKind::insufficient_support,
          "fewer than 2 observations inside the target interval");

  const LocalLinearSmoother smoother(a, scores, kernel);
  const std::size_t n = a.size();
  const std::size_t g = h_grid.size();

  std::vector<CvTerms> terms(g);
  std::vector<char> failed(g, 0);
  // Per-(h, point) work is written into separate slots and reduced serially
  // below so the objective is independent of scheduling.
  std::vector<double> fitted(g * inside.size()), lev(g * inside.size());
  std::vector<char> point_failed(g * inside.size(), 0);
  for_each_index(policy, g * inside.size(), [&](std::size_t idx) {
    const std::size_t gi = idx / inside.size();
    const std::size_t p = idx % inside.size();
    try {
      const auto r = smoother.in_sample(inside[p], h_grid[gi]);
      fitted[idx] = r.fitted;
      lev[idx] = r.leverage;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::insufficient_support && e.kind() != ErrorKind::rank_deficiency)
        throw;
      point_failed[idx] = 1;
    }
  });
  for (std::size_t gi = 0; gi < g; ++gi) {
    auto& t = terms[gi];
    for (std::size_t p = 0; p < inside.size(); ++p) {
      const std::size_t idx = gi * inside.size() + p;
      if (point_failed[idx]) {
        failed[gi] = 1;
        break;
      }
      const double resid = scores[inside[p]] - fitted[idx];
      t.rss += resid * resid;
      t.trace += lev[idx];
      if (lev[idx] >= kHighLeverage) {
        t.excluded.push_back(inside[p]);
        continue;
      }
      const double r = resid / (1.0 - lev[idx]);
      t.loo += r * r;
      ++t.used;
    }
  }

  BandwidthReport report;
  report.objective_kind = objective;
  report.grid.assign(h_grid.begin(), h_grid.end());
  report.objective.assign(g, std::numeric_limits<double>::infinity());
  const double nn = static_cast<double>(n);
  const double m = static_cast<double>(inside.size());

  // C_p needs a noise level; take it from the smoothest successful fit.
  double sigma2 = 0.0;
  if (objective == BandwidthObjective::cp) {
    std::size_t widest = g;
    for (std::size_t gi = 0; gi < g; ++gi)
      if (!failed[gi] && (widest == g || h_grid[gi] > h_grid[widest])) widest = gi;
    if (widest < g) sigma2 = terms[widest].rss / std::max(1.0, m - terms[widest].trace);
  }

  for (std::size_t gi = 0; gi < g; ++gi) {
    if (failed[gi]) {
      report.failing_h.push_back(h_grid[gi]);
      continue;
    }
    const auto& t = terms[gi];
    switch (objective) {
      case BandwidthObjective::loocv:
        report.objective[gi] = t.loo / nn;
        break;
      case BandwidthObjective::gcv: {
        const double denom = 1.0 - t.trace / m;
        report.objective[gi] = denom > 0.0 ? (t.rss / nn) / (denom * denom)
                                           : std::numeric_limits<double>::infinity();
        break;
      }
      case BandwidthObjective::cp:
        report.objective[gi] = (t.rss + 2.0 * sigma2 * t.trace) / nn;
        break;
    }
  }

  if (report.failing_h.size() == g) {
    std::ostringstream msg;
    msg << "no bandwidth in the grid has local support at every interval point; failing h:";
    for (double h : report.failing_h) msg << ' ' << format_double(h);
    fail(ErrorKind::bandwidth_selection, msg.str());
  }

  std::vector<std::size_t> by_h(g);
  std::iota(by_h.begin(), by_h.end(), std::size_t{0});
  std::stable_sort(by_h.begin(), by_h.end(),
                   [&](std::size_t i, std::size_t j) { return h_grid[i] < h_grid[j]; });
  std::size_t best = g;
  for (std::size_t gi : by_h) {
    const double v = report.objective[gi];
    if (!std::isfinite(v)) continue;
    if (best == g) {
      best = gi;
      continue;
    }
    const double b = report.objective[best];
    if (v <= b + 1e-9 * std::abs(b) + 1e-300) best = gi;
  }
  report.h = h_grid[best];
  report.excluded_high_leverage = terms[best].excluded;
  return report;
}

double select_bandwidth_loocv(std::span<const double> scores, std::span<const double> a,
                              const TargetInterval& interval, std::span<const double> h_grid,
                              KernelId kernel) {
  return select_bandwidth(scores, a, interval, h_grid, kernel).h;
}

double silverman_scale(std::span<const double> a) {
  require(a.size() >= 2, ErrorKind::insufficient_support, "need at least two treatments");
  const double sd = sample_sd(a);
  const double iqr = quantile(a, 0.75) - quantile(a, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  require(spread > 0.0, ErrorKind::insufficient_support, "treatments have zero spread");
  return 0.9 * spread * std::pow(static_cast<double>(a.size()), -0.2);
}

std::vector<double> default_bandwidth_grid(std::span<const double> a, std::size_t count) {
  require(count >= 1, ErrorKind::invalid_argument, "bandwidth grid needs at least one value");
  const double base = silverman_scale(a);
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = base;
    return grid;
  }
  const double lo = std::log(0.25 * base);
  const double hi = std::log(4.0 * base);
  for (std::size_t i = 0; i < count; ++i)
    grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  return grid;
}

BandwidthObjective parse_bandwidth_objective(std::string_view name) {
  if (name == "loocv") return BandwidthObjective::loocv;
  if (name == "gcv") return BandwidthObjective::gcv;
  if (name == "cp") return BandwidthObjective::cp;
  fail(ErrorKind::invalid_argument, "unknown bandwidth objective '" + std::string(name) + "'");
}

std::string_view to_string(BandwidthObjective objective) {
  switch (objective) {
    case BandwidthObjective::loocv: return "loocv";
    case BandwidthObjective::gcv: return "gcv";
    case BandwidthObjective::cp: return "cp";
  }
  return "loocv";
}

}  // namespace ivdrf
