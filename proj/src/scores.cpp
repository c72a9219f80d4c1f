#include "ivdrf/scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ivdrf/error.hpp"
#include "ivdrf/rng.hpp"

namespace ivdrf {

ScoreTag parse_score_tag(std::string_view name) {
  static constexpr std::pair<std::string_view, ScoreTag> table[] = {
      {"aipw_iv", ScoreTag::aipw_iv},         {"ipw_iv", ScoreTag::ipw_iv},
      {"or_iv", ScoreTag::or_iv},             {"aipw_nuc", ScoreTag::aipw_nuc},
      {"ipw_nuc", ScoreTag::ipw_nuc},         {"or_nuc", ScoreTag::or_nuc},
      {"degenerate_iv", ScoreTag::degenerate_iv}, {"multicat_iv", ScoreTag::multicat_iv}};
  for (const auto& [n, t] : table)
    if (n == name) return t;
  fail(ErrorKind::invalid_argument, "unknown estimator tag '" + std::string(name) + "'");
}

std::string_view to_string(ScoreTag tag) {
  switch (tag) {
    case ScoreTag::aipw_iv: return "aipw_iv";
    case ScoreTag::ipw_iv: return "ipw_iv";
    case ScoreTag::or_iv: return "or_iv";
    case ScoreTag::aipw_nuc: return "aipw_nuc";
    case ScoreTag::ipw_nuc: return "ipw_nuc";
    case ScoreTag::or_nuc: return "or_nuc";
    case ScoreTag::degenerate_iv: return "degenerate_iv";
    case ScoreTag::multicat_iv: return "multicat_iv";
  }
  return "unknown";
}

bool is_nuc(ScoreTag tag) {
  return tag == ScoreTag::aipw_nuc || tag == ScoreTag::ipw_nuc || tag == ScoreTag::or_nuc;
}

EmpiricalMeasure EmpiricalMeasure::from_rows(const Dataset& data, std::span<const double> zpi_all,
                                             std::span<const Index> rows) {
  require(!rows.empty(), ErrorKind::empty_data, "empirical measure needs at least one row");
  EmpiricalMeasure e;
  const auto m = static_cast<Eigen::Index>(rows.size());
  e.zpi.resize(rows.size());
  e.l.resize(m, static_cast<Eigen::Index>(data.l_dim()));
  e.weights.assign(rows.size(), 1.0 / static_cast<double>(rows.size()));
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto i = rows[static_cast<std::size_t>(j)];
    e.zpi[static_cast<std::size_t>(j)] = zpi_all[i];
    if (data.l_dim() > 0) e.l.row(j) = data.l().row(static_cast<Eigen::Index>(i));
  }
  return e;
}

EmpiricalMeasure EmpiricalMeasure::weighted(std::vector<double> zpi, RowMatrix l, std::vector<double> weights) {
  require(!zpi.empty() && zpi.size() == weights.size() && static_cast<std::size_t>(l.rows()) == zpi.size(),
          ErrorKind::invalid_argument, "empirical measure components differ in length");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  require(total > 0.0, ErrorKind::invalid_argument, "empirical measure weights sum to zero");
  for (double& w : weights) w /= total;
  return {std::move(zpi), std::move(l), std::move(weights)};
}

EmpiricalMeasure EmpiricalMeasure::capped(std::size_t cap, std::uint64_t seed) const {
  if (cap == 0 || size() <= cap) return *this;
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, 7);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  EmpiricalMeasure e;
  e.zpi.resize(cap);
  e.l.resize(static_cast<Eigen::Index>(cap), l.cols());
  e.weights.resize(cap);
  double total = 0.0;
  for (std::size_t k = 0; k < cap; ++k) {
    e.zpi[k] = zpi[idx[k]];
    if (l.cols() > 0) e.l.row(static_cast<Eigen::Index>(k)) = l.row(static_cast<Eigen::Index>(idx[k]));
    e.weights[k] = weights[idx[k]];
    total += e.weights[k];
  }
  for (double& w : e.weights) w /= total;
  return e;
}

namespace {

void check_kappa(double k) {
  require(std::isfinite(k) && k != 0.0, ErrorKind::internal,
          "kappa evaluated to zero or a non-finite value after clipping");
}

}  // namespace

double aipw_score(const Observation& o, double zpi, const NuisanceVector& alpha,
                  const EmpiricalMeasure& emp) {
  const auto v = alpha.at(o.a, o.l);
  check_kappa(v.kappa);
  double s = v.delta * (zpi - alpha.rho(o.l)) / v.kappa * (o.y - v.mu);
  for (std::size_t j = 0; j < emp.size(); ++j) {
    const auto l = emp.l_row(j);
    const auto w = alpha.at(o.a, l);
    check_kappa(w.kappa);
    s += emp.weights[j] * (w.mu - (emp.zpi[j] - alpha.rho(l)) * (w.eta - w.mu) / w.kappa);
  }
  return s;
}

double ipw_score(const Observation& o, double zpi, const NuisanceVector& alpha) {
  const auto v = alpha.at(o.a, o.l);
  check_kappa(v.kappa);
  return v.delta * (zpi - alpha.rho(o.l)) * o.y / v.kappa;
}

double or_score(const Observation& o, const NuisanceVector& alpha, const EmpiricalMeasure& emp) {
  double s = 0.0;
  for (std::size_t j = 0; j < emp.size(); ++j) s += emp.weights[j] * alpha.at(o.a, emp.l_row(j)).mu;
  return s;
}

NucScores nuc_scores(const Observation& o, const NuisanceVector& alpha, const EmpiricalMeasure& emp) {
  const auto v = alpha.at(o.a, o.l);
  double integral = 0.0;
  for (std::size_t j = 0; j < emp.size(); ++j) integral += emp.weights[j] * alpha.at(o.a, emp.l_row(j)).eta;
  return {v.delta * (o.y - v.eta) + integral, v.delta * o.y, integral};
}

double degenerate_score(const Observation& o, double zpi, const NuisanceVector& alpha,
                        const EmpiricalMeasure& emp) {
  require(alpha.l_dim() == 0 && o.l.empty(), ErrorKind::misuse,
          "degenerate score requires an empty covariate set");
  const auto v = alpha.at(o.a, {});
  check_kappa(v.kappa);
  const double rho = alpha.rho({});
  double zbar = 0.0;
  for (std::size_t j = 0; j < emp.size(); ++j) zbar += emp.weights[j] * emp.zpi[j];
  return (zpi - rho) * (o.y - v.mu) / v.kappa + v.mu - (zbar - rho) * (v.eta - v.mu) / v.kappa;
}

double multicat_score(const Observation& o, double zpi, const NuisanceVector& alpha, double a_target,
                      const PropensityFn& delta, double floor) {
  const double rho = alpha.rho(o.l);
  const auto t = alpha.at(a_target, o.l);
  check_kappa(t.kappa);
  double s = t.mu - (zpi - rho) / t.kappa * (t.eta - t.mu);
  if (o.a == a_target) {
    const double d = delta(a_target, o.l);
    require(std::isfinite(d) && d >= floor, ErrorKind::propensity,
            "treatment propensity below floor at a=" + format_double(a_target));
    s += (zpi - rho) / t.kappa * (o.y - t.mu) / d;
  }
  return s;
}

void score_rows(const Dataset& data, std::span<const double> zpi, std::span<const Index> rows,
                const NuisanceVector& alpha, const EmpiricalMeasure& emp,
                std::span<const ScoreTag> tags, std::vector<std::vector<double>>& out,
                ExecPolicy policy, bool reference) {
  require(out.size() == tags.size(), ErrorKind::internal, "score output has wrong tag count");
  for (auto& o : out)
    if (o.size() != data.size()) o.assign(data.size(), 0.0);
  bool need_panel = false, need_iv_integral = false, need_nuc_integral = false;
  for (auto t : tags) {
    require(t != ScoreTag::multicat_iv, ErrorKind::misuse,
            "multicat scores need a target category; use multicat_score directly");
    if (t == ScoreTag::degenerate_iv)
      require(data.l_dim() == 0, ErrorKind::misuse, "degenerate score requires an empty covariate set");
    if (t == ScoreTag::aipw_iv || t == ScoreTag::or_iv) need_iv_integral = true;
    if (t == ScoreTag::aipw_nuc || t == ScoreTag::or_nuc) need_nuc_integral = true;
  }
  need_panel = need_iv_integral || need_nuc_integral;

  const std::size_t m = emp.size();
  std::vector<double> rho_emp(m);
  double zbar = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    rho_emp[j] = alpha.rho(emp.l_row(j));
    zbar += emp.weights[j] * emp.zpi[j];
  }
  std::unique_ptr<NuisancePanel> panel;
  if (need_panel && !reference) panel = alpha.panel(emp.l);

  for_each_index(policy, rows.size(), [&](std::size_t r) {
    const Index i = rows[r];
    const Observation o = data[i];
    const double z = zpi[i];
    const auto v = alpha.at(o.a, o.l);
    check_kappa(v.kappa);
    const double rho = alpha.rho(o.l);
    double iv_int = 0.0, or_int = 0.0, nuc_int = 0.0;
    if (need_panel && !reference) {
      std::vector<double> mu(m), kappa(m), eta(m);
      panel->eval(o.a, mu.data(), kappa.data(), eta.data());
      for (std::size_t j = 0; j < m; ++j) {
        const double w = emp.weights[j];
        iv_int += w * (mu[j] - (emp.zpi[j] - rho_emp[j]) * (eta[j] - mu[j]) / kappa[j]);
        or_int += w * mu[j];
        nuc_int += w * eta[j];
      }
    } else if (need_panel) {
      for (std::size_t j = 0; j < m; ++j) {
        const auto q = alpha.at(o.a, emp.l_row(j));
        const double w = emp.weights[j];
        iv_int += w * (q.mu - (emp.zpi[j] - rho_emp[j]) * (q.eta - q.mu) / q.kappa);
        or_int += w * q.mu;
        nuc_int += w * q.eta;
      }
    }
    for (std::size_t t = 0; t < tags.size(); ++t) {
      double s = 0.0;
      switch (tags[t]) {
        case ScoreTag::aipw_iv: s = v.delta * (z - rho) / v.kappa * (o.y - v.mu) + iv_int; break;
        case ScoreTag::ipw_iv: s = v.delta * (z - rho) * o.y / v.kappa; break;
        case ScoreTag::or_iv: s = or_int; break;
        case ScoreTag::aipw_nuc: s = v.delta * (o.y - v.eta) + nuc_int; break;
        case ScoreTag::ipw_nuc: s = v.delta * o.y; break;
        case ScoreTag::or_nuc: s = nuc_int; break;
        case ScoreTag::degenerate_iv:
          s = (z - rho) * (o.y - v.mu) / v.kappa + v.mu - (zbar - rho) * (v.eta - v.mu) / v.kappa;
          break;
        case ScoreTag::multicat_iv: break;
      }
      require(std::isfinite(s), ErrorKind::internal,
              "non-finite " + std::string(to_string(tags[t])) + " score at row " + std::to_string(i));
      out[t][i] = s;
    }
  });
}

double estimate_psi_q(std::span<const double> scores, std::span<const double> a, const InterventionQ& q,
                      std::optional<TargetInterval> validated, std::span<const double> weights) {
  require(scores.size() == a.size() && !scores.empty(), ErrorKind::invalid_argument,
          "scores and treatments must be nonempty and equal length");
  require(static_cast<bool>(q.fn), ErrorKind::invalid_argument, "intervention q is empty");
  if (validated) {
    require(validated->lo <= q.lo && q.hi <= validated->hi, ErrorKind::invalid_argument,
            "support of q must lie inside the validated interval [" + format_double(validated->lo) + ", " +
                format_double(validated->hi) + "]");
  }
  double s = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    double qv = 0.0;
    if (a[i] >= q.lo && a[i] <= q.hi) qv = q.fn(a[i]);
    s += w * qv * scores[i];
    wsum += w;
  }
  return s / wsum;
}

}  // namespace ivdrf
