#include "ivdrf/crossfit.hpp"

#include "ivdrf/error.hpp"
#include "ivdrf/rng.hpp"

namespace ivdrf {

const ScoreVector& CrossfitResult::get(ScoreTag tag) const {
  for (const auto& s : scores)
    if (s.tag == tag) return s;
  fail(ErrorKind::misuse, "score tag '" + std::string(to_string(tag)) + "' was not computed");
}

namespace {

std::shared_ptr<const NuisanceVector> train_fold(const Dataset& data, std::span<const double> zpi,
                                                 std::span<const Index> rows, std::size_t k,
                                                 const TargetInterval& interval, const CrossfitConfig& cfg,
                                                 FoldLog& log) {
  const Dataset train = data.subset(rows);
  if (cfg.nuisance_override) return cfg.nuisance_override(train, k);
  std::vector<double> z(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) z[r] = zpi[rows[r]];
  auto fitted = train_nuisance(train, z, interval, cfg.nuisance);
  log.kappa_floor = fitted->kappa_floor();
  return fitted;
}

void finish_log(const NuisanceVector& nv, FoldLog& log) {
  if (const auto* f = dynamic_cast<const FittedNuisance*>(&nv)) log.clips = f->clip_counts();
}

CrossfitResult make_result(const Dataset& data, std::span<const double> zpi, const std::string& pi_id,
                           const CrossfitConfig& cfg) {
  require(!cfg.tags.empty(), ErrorKind::invalid_argument, "no estimator tags requested");
  require(zpi.size() == data.size(), ErrorKind::invalid_argument, "Z_pi length mismatch");
  CrossfitResult res;
  res.zpi.assign(zpi.begin(), zpi.end());
  for (auto t : cfg.tags) {
    ScoreVector s;
    s.tag = t;
    s.weighting_id = is_nuc(t) ? "" : pi_id;
    s.values.assign(data.size(), 0.0);
    s.fold.assign(data.size(), 0);
    res.scores.push_back(std::move(s));
  }
  return res;
}

[[noreturn]] void fold_failure(std::size_t k, const Error& e) {
  fail(ErrorKind::fold, "fold " + std::to_string(k) + " failed (" + std::string(to_string(e.kind())) +
                            "): " + e.what());
}

}  // namespace

CrossfitResult crossfit_scores(const Dataset& data, std::span<const double> zpi, const std::string& pi_id,
                               const TargetInterval& interval, const CrossfitConfig& cfg) {
  if (cfg.nested) return nested_crossfit_scores(data, zpi, pi_id, interval, cfg);
  CrossfitResult res = make_result(data, zpi, pi_id, cfg);
  res.plan = make_folds(data.size(), cfg.folds, cfg.subsplit_fraction, cfg.seed);
  std::vector<std::vector<double>> out(cfg.tags.size(), std::vector<double>(data.size(), 0.0));
  for (std::size_t k = 0; k < cfg.folds; ++k) {
    FoldLog log;
    log.fold = k;
    try {
      const auto train_rows = res.plan.subsplit_rows(k, 1);
      const auto emp_rows = res.plan.subsplit_rows(k, 2);
      const auto score_rows_k = res.plan.fold_rows(k);
      log.train_rows = train_rows.size();
      auto nv = train_fold(data, zpi, train_rows, k, interval, cfg, log);
      EmpiricalMeasure emp = EmpiricalMeasure::from_rows(data, zpi, emp_rows)
                                 .capped(cfg.emp_cap, derive_seed(cfg.seed, 21, k));
      log.emp_rows = emp.size();
      score_rows(data, zpi, score_rows_k, *nv, emp, cfg.tags, out, cfg.policy, cfg.reference_scores);
      log.scored_rows = score_rows_k.size();
      finish_log(*nv, log);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::fold) throw;
      fold_failure(k, e);
    }
    res.log.push_back(log);
  }
  for (std::size_t t = 0; t < cfg.tags.size(); ++t) {
    res.scores[t].values = std::move(out[t]);
    res.scores[t].fold.assign(res.plan.fold_of.begin(), res.plan.fold_of.end());
  }
  return res;
}

CrossfitResult crossfit_scores(const Dataset& data, const WeightingFunction& pi,
                               const TargetInterval& interval, const CrossfitConfig& cfg) {
  const auto zpi = pi.evaluate(data);
  return crossfit_scores(data, zpi, pi.id(), interval, cfg);
}

CrossfitResult nested_crossfit_scores(const Dataset& data, std::span<const double> zpi,
                                      const std::string& pi_id, const TargetInterval& interval,
                                      const CrossfitConfig& cfg) {
  require(cfg.inner_folds >= 2, ErrorKind::invalid_plan, "nested cross-fitting needs J >= 2");
  CrossfitResult res = make_result(data, zpi, pi_id, cfg);
  res.plan = make_nested_folds(data.size(), cfg.folds, cfg.inner_folds, cfg.seed);
  std::vector<std::vector<double>> out(cfg.tags.size(), std::vector<double>(data.size(), 0.0));
  for (std::size_t k = 0; k < cfg.folds; ++k) {
    FoldLog log;
    log.fold = k;
    try {
      const auto train_rows = res.plan.complement_rows(k);
      log.train_rows = train_rows.size();
      auto nv = train_fold(data, zpi, train_rows, k, interval, cfg, log);
      for (std::size_t j = 0; j < cfg.inner_folds; ++j) {
        const auto emp_rows = res.plan.inner_complement_rows(k, j);
        const auto rows = res.plan.inner_rows(k, j);
        EmpiricalMeasure emp = EmpiricalMeasure::from_rows(data, zpi, emp_rows)
                                   .capped(cfg.emp_cap, derive_seed(cfg.seed, 22, k * 131 + j));
        log.emp_rows += emp.size();
        score_rows(data, zpi, rows, *nv, emp, cfg.tags, out, cfg.policy, cfg.reference_scores);
        log.scored_rows += rows.size();
      }
      finish_log(*nv, log);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::fold) throw;
      fold_failure(k, e);
    }
    res.log.push_back(log);
  }
  for (std::size_t t = 0; t < cfg.tags.size(); ++t) {
    res.scores[t].values = std::move(out[t]);
    res.scores[t].fold.assign(res.plan.fold_of.begin(), res.plan.fold_of.end());
  }
  return res;
}

CrossfitResult nested_crossfit_scores(const Dataset& data, const WeightingFunction& pi,
                                      const TargetInterval& interval, const CrossfitConfig& cfg) {
  const auto zpi = pi.evaluate(data);
  return nested_crossfit_scores(data, zpi, pi.id(), interval, cfg);
}

}  // namespace ivdrf
