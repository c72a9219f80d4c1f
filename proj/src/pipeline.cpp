#include "ivdrf/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "ivdrf/error.hpp"
#include "ivdrf/rng.hpp"

namespace ivdrf {

std::pair<std::vector<Index>, std::vector<Index>> holdout_split(std::size_t n, double fraction, std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0, ErrorKind::invalid_argument, "holdout fraction must lie in [0, 1)");
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng = make_rng(seed, 61);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<Index> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<Index> rest(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  std::sort(held.begin(), held.end());
  std::sort(rest.begin(), rest.end());
  return {rest, held};
}

WeightingFunction build_weighting(const std::string& spec, const Dataset& pi_train, const Dataset& data,
                                  const TargetInterval& interval, const DensityConfig& config) {
  if (spec == "density") return make_density_rwf(pi_train, 0.5 * (interval.lo + interval.hi), config);
  if (spec.rfind("density@", 0) == 0) return parse_weighting_spec(spec, pi_train, config);
  return parse_weighting_spec(spec, data, config);
}

namespace {

struct Split {
  Dataset est;
  Dataset pi_train;
};

Split split_for(const Dataset& data, const std::string& spec, double holdout, std::uint64_t seed) {
  const bool density = spec.rfind("density", 0) == 0;
  if (!density || holdout == 0.0) return {data, data};
  auto [rest, held] = holdout_split(data.size(), holdout, seed);
  require(!held.empty() && !rest.empty(), ErrorKind::empty_data, "holdout split left an empty part");
  return {data.subset(rest), data.subset(held)};
}

}  // namespace

DiagnoseOutput run_diagnose(const Dataset& data, const DiagnosePlan& plan) {
  const auto split = split_for(data, plan.weighting, plan.holdout, plan.seed);
  DiagnoseOutput out;
  out.pi = build_weighting(plan.weighting, split.pi_train, split.est, plan.interval, plan.pi_density);
  const auto l_grid = quantile_l_grid(split.est, plan.urwf.l_per_dim, plan.urwf.l_cap,
                                      plan.urwf.regression.discrete_threshold);
  const auto a_grid = plan.interval.grid(plan.a_points);
  out.relevance = chi2_divergence_curve(split.est, a_grid, l_grid, plan.relevance);
  out.verdict = check_urwf(split.est, out.pi, plan.interval, plan.urwf);
  const Support s = split.est.treatment_support();
  const auto map_grid = TargetInterval(s.lo, s.hi).grid(plan.a_points);
  out.kappa = kappa_sign_map(split.est, out.pi, map_grid, l_grid, plan.urwf.regression, plan.relevance.policy);
  if (plan.cover) out.cover = cover_interval(split.est, plan.interval.lo, plan.interval.hi, plan.cover_config);
  return out;
}

EstimateOutput run_estimate(const Dataset& data, const EstimatePlan& plan) {
  plan.interval.require_interior(data.treatment_support());
  const auto split = split_for(data, plan.weighting, plan.holdout, plan.seed);
  EstimateOutput out;
  out.pi = build_weighting(plan.weighting, split.pi_train, split.est, plan.interval, plan.pi_density);
  out.verdict = check_urwf(split.est, out.pi, plan.interval, plan.urwf);
  if (!out.verdict.pass && !plan.force)
    fail(ErrorKind::refused,
         "weighting function '" + out.pi.id() + "' fails the uniform relevance check on [" +
             format_double(plan.interval.lo) + ", " + format_double(plan.interval.hi) +
             "] (min |kappa| = " + format_double(out.verdict.min_abs_kappa) +
             ", epsilon = " + format_double(out.verdict.epsilon) +
             (out.verdict.sign_constant ? "" : ", sign changes") +
             "); run diagnose for details or pass --force");
  out.estimation_rows = split.est.size();

  CrossfitConfig cf = plan.crossfit;
  cf.seed = derive_seed(plan.seed, 62);
  const auto zpi = out.pi.evaluate(split.est);
  out.crossfit = crossfit_scores(split.est, zpi, out.pi.id(), plan.interval, cf);
  const std::span<const double> a(split.est.a().data(), split.est.size());

  auto smooth = [&](std::span<const double> scores, std::span<const double> av, ExecPolicy policy) {
    return plan.method == DrfMethod::llkr ? estimate_drf_llkr(scores, av, plan.interval, plan.drf, policy)
                                          : estimate_drf_erm(scores, av, plan.interval, plan.drf);
  };
  out.drf = smooth(out.crossfit.scores.front().values, a, cf.policy);

  if (plan.bootstrap > 0) {
    // Pairs bootstrap of the estimation sample with the weighting function held fixed.
    const WeightingFunction pi = out.pi;
    auto rerun = [&](const Dataset& d, std::uint64_t seed) {
      CrossfitConfig c = cf;
      c.seed = seed;
      c.tags = {cf.tags.front()};
      const auto z = pi.evaluate(d);
      const auto r = crossfit_scores(d, z, pi.id(), plan.interval, c);
      DrfConfig dc = plan.drf;
      dc.variance = false;
      const std::span<const double> av(d.a().data(), d.size());
      return plan.method == DrfMethod::llkr ? estimate_drf_llkr(r.scores.front().values, av, plan.interval, dc, c.policy)
                                            : estimate_drf_erm(r.scores.front().values, av, plan.interval, dc);
    };
    out.bootstrap = bootstrap_drf(split.est, rerun, plan.bootstrap, derive_seed(plan.seed, 63), cf.policy);
  }
  return out;
}

}  // namespace ivdrf
