#pragma once

// Brute-force references used by the tests. Everything here is computed from
// the raw probability tables of a DiscreteLaw, without calling its methods.

#include <cmath>
#include <functional>
#include <vector>

#include "ivdrf/sim.hpp"

namespace oracle {

using ivdrf::DiscreteLaw;

inline double pl(const DiscreteLaw& d, std::size_t li) { return d.l_values.empty() ? 1.0 : d.l_probs[li]; }
inline std::size_t nl(const DiscreteLaw& d) { return d.l_values.empty() ? 1 : d.l_values.size(); }

/// P(L = l, U = u, Z = z, A = a).
inline double joint(const DiscreteLaw& d, std::size_t li, std::size_t ui, std::size_t zi, std::size_t ai) {
  return pl(d, li) * d.u_given_l[li][ui] * d.z_given_l[li][zi] * d.a_given[li][zi][ui][ai];
}

/// Sums f(li, ui, zi, joint) over all atoms with treatment index ai.
template <class F>
double sum_at(const DiscreteLaw& d, std::size_t ai, F&& f) {
  double s = 0.0;
  for (std::size_t li = 0; li < nl(d); ++li)
    for (std::size_t ui = 0; ui < d.u_values.size(); ++ui)
      for (std::size_t zi = 0; zi < d.z_values.size(); ++zi) s += f(li, ui, zi, joint(d, li, ui, zi, ai));
  return s;
}

inline double theta(const DiscreteLaw& d, std::size_t ai) {
  double s = 0.0;
  for (std::size_t li = 0; li < nl(d); ++li)
    for (std::size_t ui = 0; ui < d.u_values.size(); ++ui) s += pl(d, li) * d.u_given_l[li][ui] * d.y_table[li][ui][ai];
  return s;
}

inline double p_a(const DiscreteLaw& d, std::size_t ai) {
  return sum_at(d, ai, [](auto, auto, auto, double p) { return p; });
}

inline double p_al(const DiscreteLaw& d, std::size_t ai, std::size_t li) {
  return sum_at(d, ai, [&](std::size_t l, auto, auto, double p) { return l == li ? p : 0.0; }) / pl(d, li);
}

struct Nuisance {
  double mu, rho, kappa, eta, delta;
};

/// Nuisance values at (a, l) for the weighting table pi[z][l].
inline Nuisance nuisance(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi, std::size_t ai, std::size_t li) {
  double rho = 0.0;
  for (std::size_t zi = 0; zi < d.z_values.size(); ++zi) rho += d.z_given_l[li][zi] * pi[zi][li];
  double m = 0.0, ez = 0.0, ey = 0.0, eyz = 0.0;
  sum_at(d, ai, [&](std::size_t l, std::size_t u, std::size_t z, double p) {
    if (l != li) return 0.0;
    const double y = d.y_table[l][u][ai];
    m += p;
    ez += p * pi[z][l];
    ey += p * y;
    eyz += p * y * pi[z][l];
    return 0.0;
  });
  Nuisance n{};
  n.rho = rho;
  n.eta = ey / m;
  n.kappa = ez / m - rho;
  n.mu = (eyz / m - n.eta * rho) / n.kappa;
  n.delta = p_a(d, ai) / (m / pl(d, li));
  return n;
}

inline double chi2(const DiscreteLaw& d, std::size_t ai, std::size_t li) {
  std::vector<double> paz(d.z_values.size(), 0.0);
  for (std::size_t zi = 0; zi < d.z_values.size(); ++zi)
    for (std::size_t ui = 0; ui < d.u_values.size(); ++ui)
      paz[zi] += d.u_given_l[li][ui] * d.a_given[li][zi][ui][ai];
  double pa = 0.0;
  for (std::size_t zi = 0; zi < d.z_values.size(); ++zi) pa += d.z_given_l[li][zi] * paz[zi];
  double s = 0.0;
  for (std::size_t zi = 0; zi < d.z_values.size(); ++zi) {
    const double r = paz[zi] / pa - 1.0;
    s += d.z_given_l[li][zi] * r * r;
  }
  return s;
}

/// omega(a, u, l) = p(a|u,l)/p(a|l) * (E[pi|a,u,l] - rho(l)) / (E[pi|a,l] - rho(l)).
inline double omega(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi, std::size_t ai, std::size_t ui,
                    std::size_t li) {
  double pau = 0.0, epu = 0.0;
  for (std::size_t zi = 0; zi < d.z_values.size(); ++zi) {
    const double w = d.z_given_l[li][zi] * d.a_given[li][zi][ui][ai];
    pau += w;
    epu += w * pi[zi][li];
  }
  const auto n = nuisance(d, pi, ai, li);
  const double pa = p_al(d, ai, li);
  return pau / pa * (epu / pau - n.rho) / (n.kappa);
}

/// pi(z, l) = z + c * l.
inline DiscreteLaw::PiTable linear_pi(const DiscreteLaw& d, double c = 0.0) {
  DiscreteLaw::PiTable t(d.z_values.size(), std::vector<double>(nl(d)));
  for (std::size_t zi = 0; zi < d.z_values.size(); ++zi)
    for (std::size_t li = 0; li < nl(d); ++li) t[zi][li] = d.z_values[zi] + c * (d.l_values.empty() ? 0.0 : d.l_values[li]);
  return t;
}

/// Treatment indices whose kappa is bounded away from zero at every l.
inline std::vector<std::size_t> relevant_a(const DiscreteLaw& d, const DiscreteLaw::PiTable& pi, double tol = 1e-6) {
  std::vector<std::size_t> out;
  for (std::size_t ai = 0; ai < d.a_values.size(); ++ai) {
    bool ok = true;
    for (std::size_t li = 0; li < nl(d); ++li)
      if (p_al(d, ai, li) <= 0.0 || std::abs(nuisance(d, pi, ai, li).kappa) < tol) ok = false;
    if (ok) out.push_back(ai);
  }
  return out;
}

/// Least-squares slope of log(y) on log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(std::abs(y[i])) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(std::abs(y[i])) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace oracle
