#pragma once

// Enumeration suites shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ivdrf/scores.hpp"
#include "ivdrf/sim.hpp"
#include "oracles.hpp"

namespace suite {

using namespace ivdrf;

/// Nuisance vector built from the brute-force oracle tables.
inline std::shared_ptr<FunctionalNuisance> oracle_nuisance(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi) {
  auto law = std::make_shared<DiscreteLaw>(d);
  auto lookup_l = [law](std::span<const double> l) -> std::size_t {
    if (law->l_values.empty()) return 0;
    for (std::size_t i = 0; i < law->l_values.size(); ++i)
      if (law->l_values[i] == l[0]) return i;
    return 0;
  };
  auto lookup_a = [law](double a) -> std::size_t {
    for (std::size_t i = 0; i < law->a_values.size(); ++i)
      if (law->a_values[i] == a) return i;
    return 0;
  };
  return std::make_shared<FunctionalNuisance>(
      law->l_values.empty() ? 0 : 1,
      [law, pi, lookup_l](std::span<const double> l) { return oracle::nuisance(*law, pi, 0, lookup_l(l)).rho; },
      [law, pi, lookup_l, lookup_a](double a, std::span<const double> l) {
        const auto n = oracle::nuisance(*law, pi, lookup_a(a), lookup_l(l));
        return NuisanceValues{n.mu, n.kappa, n.eta, n.delta};
      });
}

/// Population measure of (Z_pi, L) assembled from the tables.
inline EmpiricalMeasure population(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi) {
  std::vector<double> zpi, w, lv;
  for (std::size_t li = 0; li < oracle::nl(d); ++li)
    for (std::size_t zi = 0; zi < d.z_values.size(); ++zi) {
      zpi.push_back(pi[zi][li]);
      w.push_back(oracle::pl(d, li) * d.z_given_l[li][zi]);
      if (!d.l_values.empty()) lv.push_back(d.l_values[li]);
    }
  RowMatrix l(static_cast<Eigen::Index>(zpi.size()), d.l_values.empty() ? 0 : 1);
  for (std::size_t k = 0; k < lv.size(); ++k) l(static_cast<Eigen::Index>(k), 0) = lv[k];
  return EmpiricalMeasure::weighted(zpi, l, w);
}

/// Calls f(observation, zpi, probability) for every atom of the law.
template <class F>
void for_atoms(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi, F&& f) {
  for (std::size_t li = 0; li < oracle::nl(d); ++li)
    for (std::size_t ui = 0; ui < d.u_values.size(); ++ui)
      for (std::size_t zi = 0; zi < d.z_values.size(); ++zi)
        for (std::size_t ai = 0; ai < d.a_values.size(); ++ai) {
          const double p = oracle::joint(d, li, ui, zi, ai);
          if (p == 0.0) continue;
          const double lval = d.l_values.empty() ? 0.0 : d.l_values[li];
          const double zval = d.z_values[zi];
          Observation o;
          o.l = std::span<const double>(&lval, d.l_values.empty() ? 0 : 1);
          o.z = std::span<const double>(&zval, 1);
          o.a = d.a_values[ai];
          o.y = d.y_table[li][ui][ai];
          f(o, pi[zi][li], p, ai);
        }
}

/// E[score | A = a_values[ai]] by enumeration.
template <class Score>
double conditional_mean(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi, std::size_t ai, Score&& score) {
  double s = 0.0, m = 0.0;
  for_atoms(d, pi, [&](const Observation& o, double zpi, double p, std::size_t a) {
    if (a != ai) return;
    s += p * score(o, zpi);
    m += p;
  });
  return s / m;
}

struct IdentificationResult {
  std::string score;
  double max_error = 0.0;
  std::size_t checks = 0;
};

/// Largest |E[phi | A = a] - theta(a)| over relevant a for each score family on
/// one law. Degenerate scores need a law without L; multicat uses unconditional means.
inline std::vector<IdentificationResult> identification(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi) {
  const auto alpha = oracle_nuisance(d, pi);
  const auto emp = population(d, pi);
  const auto as = oracle::relevant_a(d, pi);
  std::vector<IdentificationResult> out{{"aipw"}, {"ipw"}, {"or"}};
  auto record = [](IdentificationResult& r, double err) {
    r.max_error = std::max(r.max_error, std::abs(err));
    ++r.checks;
  };
  for (auto ai : as) {
    const double th = oracle::theta(d, ai);
    record(out[0], conditional_mean(d, pi, ai, [&](const Observation& o, double z) {
             return aipw_score(o, z, *alpha, emp);
           }) - th);
    record(out[1], conditional_mean(d, pi, ai, [&](const Observation& o, double z) {
             return ipw_score(o, z, *alpha);
           }) - th);
    record(out[2], conditional_mean(d, pi, ai, [&](const Observation& o, double) {
             return or_score(o, *alpha, emp);
           }) - th);
  }
  if (d.l_values.empty()) {
    IdentificationResult r{"degenerate"};
    for (auto ai : as)
      record(r, conditional_mean(d, pi, ai, [&](const Observation& o, double z) {
               return degenerate_score(o, z, *alpha, emp);
             }) - oracle::theta(d, ai));
    out.push_back(r);
  }
  IdentificationResult mc{"multicat"};
  auto law = std::make_shared<DiscreteLaw>(d);
  const PropensityFn prop = [law](double a, std::span<const double> l) {
    std::size_t ai = 0, li = 0;
    for (std::size_t i = 0; i < law->a_values.size(); ++i)
      if (law->a_values[i] == a) ai = i;
    if (!law->l_values.empty())
      for (std::size_t i = 0; i < law->l_values.size(); ++i)
        if (law->l_values[i] == l[0]) li = i;
    return oracle::p_al(*law, ai, li);
  };
  for (auto ai : as) {
    double s = 0.0;
    for_atoms(d, pi, [&](const Observation& o, double z, double p, std::size_t) {
      s += p * multicat_score(o, z, *alpha, d.a_values[ai], prop);
    });
    record(mc, s - oracle::theta(d, ai));
  }
  out.push_back(mc);
  return out;
}

// ---------------------------------------------------------------------------
// Mixed bias: perturbed nuisances and the resulting conditional bias.

enum Component { mu = 0, rho = 1, kappa = 2, eta = 3, delta = 4 };
inline const char* component_name(int c) {
  static const char* names[] = {"mu", "rho", "kappa", "eta", "delta"};
  return names[c];
}

/// Smooth direction of perturbation for each component.
inline double direction(int c, double a, double l) {
  switch (c) {
    case mu: return 0.6 + 0.4 * a - 0.3 * l;
    case rho: return 0.5 - 0.2 * l;
    case kappa: return 0.4 + 0.3 * a + 0.2 * l;  // relative
    case eta: return -0.5 + 0.3 * a + 0.4 * l;
    default: return 0.3 - 0.4 * a + 0.2 * l;    // relative
  }
}

/// Exact nuisances with component c moved by t times its direction.
inline std::shared_ptr<FunctionalNuisance> perturbed(std::shared_ptr<const NuisanceVector> base,
                                                     std::array<double, 5> t) {
  return std::make_shared<FunctionalNuisance>(
      base->l_dim(),
      [base, t](std::span<const double> l) {
        const double lv = l.empty() ? 0.0 : l[0];
        return base->rho(l) + t[rho] * direction(rho, 0.0, lv);
      },
      [base, t](double a, std::span<const double> l) {
        const double lv = l.empty() ? 0.0 : l[0];
        auto v = base->at(a, l);
        v.mu += t[mu] * direction(mu, a, lv);
        v.kappa *= 1.0 + t[kappa] * direction(kappa, a, lv);
        v.eta += t[eta] * direction(eta, a, lv);
        v.delta *= 1.0 + t[delta] * direction(delta, a, lv);
        return v;
      });
}

/// E[phi_aipw(perturbed) | A = a] - theta(a).
inline double aipw_bias(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi, std::size_t ai,
                        std::array<double, 5> t) {
  const auto alpha = perturbed(oracle_nuisance(d, pi), t);
  const auto emp = population(d, pi);
  return conditional_mean(d, pi, ai, [&](const Observation& o, double z) { return aipw_score(o, z, *alpha, emp); }) -
         oracle::theta(d, ai);
}

struct MixedBiasResult {
  double single_max = 0.0;                 // over single-component perturbations
  std::vector<std::pair<std::string, double>> pair_slopes;
};

inline MixedBiasResult mixed_bias(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi) {
  MixedBiasResult r;
  const auto as = oracle::relevant_a(d, pi);
  for (int c = 0; c < 5; ++c)
    for (double t : {0.05, 0.2, 0.5})
      for (auto ai : as) {
        std::array<double, 5> v{};
        v[c] = t;
        r.single_max = std::max(r.single_max, std::abs(aipw_bias(d, pi, ai, v)));
      }
  const std::vector<std::pair<int, int>> pairs{{rho, eta}, {mu, kappa}, {mu, delta}, {rho, delta}};
  const std::vector<double> ts{0.0025, 0.005, 0.01, 0.02, 0.04};
  for (auto [c1, c2] : pairs) {
    // Slope at the a with the largest bias, so a near-cancelling point does not dominate.
    double best = -1.0, slope = 0.0;
    for (auto ai : as) {
      std::vector<double> b;
      for (double t : ts) {
        std::array<double, 5> v{};
        v[c1] = t;
        v[c2] = t;
        b.push_back(aipw_bias(d, pi, ai, v));
      }
      if (std::abs(b.back()) > best) {
        best = std::abs(b.back());
        slope = oracle::loglog_slope(ts, b);
      }
    }
    r.pair_slopes.emplace_back(std::string(component_name(c1)) + "," + component_name(c2), slope);
  }
  return r;
}

}  // namespace suite
