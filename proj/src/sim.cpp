#include "ivdrf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ivdrf/error.hpp"
#include "ivdrf/llkr.hpp"
#include "ivdrf/rng.hpp"

namespace ivdrf {

DgpVariant parse_dgp_variant(std::string_view name) {
  if (name == "paper_main" || name == "main") return DgpVariant::paper_main;
  if (name == "binary_iv_crossing") return DgpVariant::binary_iv_crossing;
  if (name == "unconfounded") return DgpVariant::unconfounded;
  if (name == "discrete_toy") return DgpVariant::discrete_toy;
  fail(ErrorKind::invalid_argument, "unknown DGP variant '" + std::string(name) + "'");
}

std::string_view to_string(DgpVariant v) {
  switch (v) {
    case DgpVariant::paper_main: return "paper_main";
    case DgpVariant::binary_iv_crossing: return "binary_iv_crossing";
    case DgpVariant::unconfounded: return "unconfounded";
    case DgpVariant::discrete_toy: return "discrete_toy";
  }
  return "?";
}

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
double phi(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double Psi(double x) { return x * Phi(x) + phi(x); }  // antiderivative of Phi
double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Change of variables a -> lambda = logit((a + 1) / 2).
struct Lam {
  double lam = 0.0;
  double jac = 0.0;  // d lambda / d a
  bool inside = false;
};

Lam lam_of(double a) {
  const double t = 0.5 * (a + 1.0);
  if (!(t > 0.0 && t < 1.0)) return {};
  return {std::log(t / (1.0 - t)), 1.0 / (2.0 * t * (1.0 - t)), true};
}

// Density of A from the latent branch alone: lambda = -2U + N(0,1), U ~ Unif(-1.5, 1.5).
double g_latent(const Lam& q) { return q.jac / 6.0 * (Phi(q.lam + 3.0) - Phi(q.lam - 3.0)); }

// Instrument branch integrated over Z | L = l.
double f_instrument(const Lam& q, double l) {
  const double z1 = -0.5 * l - 1.5, z2 = -0.5 * l + 1.5;
  return q.jac / 6.0 * (Phi(q.lam - 2.0 * z1) - Phi(q.lam - 2.0 * z2));
}

// (1/3) int u J phi(lambda + 2u) du over the support of U.
double m_latent(const Lam& q) {
  const double l = q.lam;
  return q.jac / 12.0 * (phi(l - 3.0) - phi(l + 3.0) - l * (Phi(l + 3.0) - Phi(l - 3.0)));
}

Dataset make_dataset(std::size_t n, const std::vector<double>& l, const std::vector<double>& z,
                     const std::vector<double>& a, const std::vector<double>& y, const std::vector<double>& u,
                     Support support) {
  const auto rows = static_cast<Eigen::Index>(n);
  RowMatrix lm(rows, 1), zm(rows, 1), um(rows, 1);
  Vector av(rows), yv(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto k = static_cast<std::size_t>(i);
    lm(i, 0) = l[k];
    zm(i, 0) = z[k];
    um(i, 0) = u[k];
    av[i] = a[k];
    yv[i] = y[k];
  }
  return Dataset(std::move(lm), std::move(zm), std::move(av), std::move(yv), std::move(um), support);
}

}  // namespace

Dataset sample_law(const DiscreteLaw& law, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::invalid_argument, "simulation needs n >= 1");
  law.validate();
  const auto atoms = law.atoms();
  std::vector<double> cum(atoms.size());
  double c = 0.0;
  for (std::size_t k = 0; k < atoms.size(); ++k) cum[k] = (c += atoms[k].p);
  Rng rng = make_rng(seed, 51);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> l(n), z(n), a(n), y(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = unif(rng) * c;
    const auto k = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), r) - cum.begin()), atoms.size() - 1);
    const auto& at = atoms[k];
    l[i] = law.has_l() ? law.l_values[at.li] : 0.0;
    z[i] = law.z_values[at.zi];
    a[i] = law.a_values[at.ai];
    u[i] = law.u_values[at.ui];
    y[i] = law.y(at.li, at.ui, at.ai);
  }
  const auto [amin, amax] = std::minmax_element(law.a_values.begin(), law.a_values.end());
  Dataset d = make_dataset(n, l, z, a, y, u, {*amin, *amax});
  if (law.has_l()) return d;
  return Dataset(RowMatrix(static_cast<Eigen::Index>(n), 0), d.z(), d.a(), d.y(), d.latent_u(),
                 d.treatment_support());
}

Dataset simulate_dgp(const DgpSpec& spec) {
  require(spec.n >= 1, ErrorKind::invalid_argument, "simulation needs n >= 1");
  if (spec.variant == DgpVariant::discrete_toy)
    return sample_law(DiscreteLaw::additive_example(0, true), spec.n, spec.seed);

  Rng rng = make_rng(spec.seed, 51);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::bernoulli_distribution ber(0.7);
  std::vector<double> l(spec.n), z(spec.n), a(spec.n), y(spec.n), u(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double eps_l = unif(rng), eps_u = unif(rng), eps_z = unif(rng);
    const double eps_az = norm(rng), eps_au = norm(rng);
    const bool eps_a = ber(rng);
    l[i] = eps_l - 0.5;
    switch (spec.variant) {
      case DgpVariant::paper_main:
      case DgpVariant::unconfounded: {
        u[i] = 3.0 * (eps_u - 0.5);
        z[i] = -0.5 * l[i] + 3.0 * (eps_z - 0.5);
        // The unconfounded variant drives treatment with an independent copy of U.
        const double u_a = spec.variant == DgpVariant::unconfounded ? 3.0 * (unif(rng) - 0.5) : u[i];
        const double pz = expit(2.0 * z[i] + eps_az);
        const double pu = expit(-2.0 * u_a + eps_au);
        a[i] = 2.0 * (eps_a ? pz : pu) - 1.0;
        break;
      }
      case DgpVariant::binary_iv_crossing: {
        u[i] = 2.0 * (eps_u - 0.5);
        z[i] = eps_z < 0.5 ? 0.0 : 1.0;
        a[i] = 2.0 * expit(1.5 * (2.0 * z[i] - 1.0) + 0.5 * l[i] - u[i] + eps_az) - 1.0;
        break;
      }
      case DgpVariant::discrete_toy: break;
    }
    y[i] = a[i] + u[i] - 0.5 * l[i];
  }
  return make_dataset(spec.n, l, z, a, y, u, {-1.0, 1.0});
}

double true_drf(DgpVariant variant, double a) {
  if (variant == DgpVariant::discrete_toy) {
    const auto law = DiscreteLaw::additive_example(0, true);
    return law.theta(law.a_index(a));
  }
  return a;
}

namespace paper_dgp {

double p_a_given_l(double a, double l) {
  const Lam q = lam_of(a);
  if (!q.inside) return 0.0;
  return 0.7 * f_instrument(q, l) + 0.3 * g_latent(q);
}

double p_a(double a) {
  const Lam q = lam_of(a);
  if (!q.inside) return 0.0;
  const double x = q.lam;
  const double f = q.jac / 6.0 * (Psi(x + 3.5) - Psi(x + 2.5) - Psi(x - 2.5) + Psi(x - 3.5));
  return 0.7 * f + 0.3 * g_latent(q);
}

double p_a_given_z(double a, double z) {
  const Lam q = lam_of(a);
  if (!q.inside) return 0.0;
  return 0.7 * q.jac * phi(q.lam - 2.0 * z) + 0.3 * g_latent(q);
}

double p_a_given_zu(double a, double z, double u) {
  const Lam q = lam_of(a);
  if (!q.inside) return 0.0;
  return 0.7 * q.jac * phi(q.lam - 2.0 * z) + 0.3 * q.jac * phi(q.lam + 2.0 * u);
}

}  // namespace paper_dgp

double PaperDgpOracle::rho(std::span<const double> l) const {
  if (w_.kind == OracleWeighting::Kind::instrument) return -0.5 * l[0];
  return paper_dgp::p_a_given_l(w_.anchor, l[0]);
}

double PaperDgpOracle::kappa(double a, double l) const {
  const Lam q = lam_of(a);
  require(q.inside, ErrorKind::invalid_argument, "oracle queried outside the open treatment support");
  const double z1 = -0.5 * l - 1.5, z2 = -0.5 * l + 1.5;
  const double g = g_latent(q);
  const double pal = 0.7 * f_instrument(q, l) + 0.3 * g;
  double qv = 0.0;  // E[pi(Z) 1 p(a | Z) | L = l]
  double r = 0.0;
  if (w_.kind == OracleWeighting::Kind::instrument) {
    r = -0.5 * l;
    const double s1 = q.lam - 2.0 * z1, s2 = q.lam - 2.0 * z2;
    const double pz = q.jac / 12.0 * (q.lam * (Phi(s1) - Phi(s2)) + phi(s1) - phi(s2));
    qv = 0.7 * pz + 0.3 * g * r;
  } else {
    const Lam q0 = lam_of(w_.anchor);
    const double g0 = g_latent(q0);
    r = 0.7 * f_instrument(q0, l) + 0.3 * g0;
    const double m = 0.5 * (q0.lam + q.lam);
    const double r2 = std::sqrt(2.0);
    const double t1 = 0.49 * q0.jac * q.jac * phi((q0.lam - q.lam) / r2) / (2.0 * r2) *
                      (Phi(r2 * (m - 2.0 * z1)) - Phi(r2 * (m - 2.0 * z2)));
    const double t2 = 0.21 * q0.jac * g * 0.5 * (Phi(q0.lam - 2.0 * z1) - Phi(q0.lam - 2.0 * z2));
    const double t3 = 0.21 * g0 * q.jac * 0.5 * (Phi(q.lam - 2.0 * z1) - Phi(q.lam - 2.0 * z2));
    const double t4 = 0.09 * g0 * g * 3.0;
    qv = (t1 + t2 + t3 + t4) / 3.0;
  }
  return qv / pal - r;
}

NuisanceValues PaperDgpOracle::at(double a, std::span<const double> l) const {
  const Lam q = lam_of(a);
  require(q.inside, ErrorKind::invalid_argument, "oracle queried outside the open treatment support");
  const double pal = paper_dgp::p_a_given_l(a, l[0]);
  NuisanceValues v;
  v.mu = a - 0.5 * l[0];
  v.eta = v.mu + (confounded_ ? 0.3 * m_latent(q) / pal : 0.0);
  v.kappa = kappa(a, l[0]);
  v.delta = paper_dgp::p_a(a) / pal;
  return v;
}

WeightingFunction oracle_weighting(const OracleWeighting& w) {
  if (w.kind == OracleWeighting::Kind::instrument)
    return WeightingFunction::custom("z", 2.0, [](std::span<const double> z, std::span<const double>) {
      return z[0];
    });
  const Lam q0 = lam_of(w.anchor);
  require(q0.inside, ErrorKind::invalid_argument, "density anchor must lie inside (-1, 1)");
  const double bound = 0.7 * q0.jac * kInvSqrt2Pi + 0.3 * g_latent(q0);
  const double a0 = w.anchor;
  auto out = WeightingFunction::custom("true_density@" + format_double(a0), bound,
                                       [a0](std::span<const double> z, std::span<const double>) {
                                         return paper_dgp::p_a_given_z(a0, z[0]);
                                       });
  out.set_anchor(a0);
  return out;
}

double PaperLatentModel::omega(double a, std::span<const double> u, std::span<const double> l,
                               const WeightingFunction& pi) const {
  const Lam q = lam_of(a);
  require(q.inside, ErrorKind::invalid_argument, "omega queried outside the open treatment support");
  const double lv = l[0];
  const double z1 = -0.5 * lv - 1.5, z2 = -0.5 * lv + 1.5;
  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  auto pi_at = [&](double z) { return pi(std::span<const double>(&z, 1), l); };
  const double rho = Quad::integrate(pi_at, z1, z2, 0, 0.0) / 3.0;
  const double a1 =
      Quad::integrate([&](double z) { return pi_at(z) * 0.7 * q.jac * phi(q.lam - 2.0 * z); }, z1, z2, 0, 0.0) /
      3.0;
  const double lat = 0.3 * q.jac * phi(q.lam + 2.0 * u[0]);
  const double p_ul = 0.7 * f_instrument(q, lv) + lat;
  const double p_l = paper_dgp::p_a_given_l(a, lv);
  const double e_aul = (a1 + lat * rho) / p_ul;
  const double e_al = (a1 + 0.3 * g_latent(q) * rho) / p_l;
  const double den = e_al - rho;
  require(std::abs(den) > 1e-14, ErrorKind::conditioning, "weighting function is not relevant at this point");
  return p_ul / p_l * (e_aul - rho) / den;
}

// ---------------------------------------------------------------------------

namespace {
void check_prob(const std::vector<double>& p, const std::string& what) {
  double s = 0.0;
  for (double v : p) {
    require(v >= 0.0 && std::isfinite(v), ErrorKind::invalid_argument, what + " has a negative or non-finite entry");
    s += v;
  }
  require(std::abs(s - 1.0) <= 1e-12, ErrorKind::invalid_argument,
          what + " sums to " + format_double(s) + " instead of 1");
}

std::size_t exact_index(const std::vector<double>& values, double x, const char* what) {
  for (std::size_t k = 0; k < values.size(); ++k)
    if (values[k] == x) return k;
  fail(ErrorKind::invalid_argument, std::string(what) + " value " + format_double(x) + " is not in the support");
}
}  // namespace

void DiscreteLaw::validate() const {
  const std::size_t nl = n_l();
  require(!u_values.empty() && !z_values.empty() && !a_values.empty(), ErrorKind::invalid_argument,
          "discrete law needs nonempty U, Z and A supports");
  if (has_l()) {
    require(l_probs.size() == nl, ErrorKind::invalid_argument, "l_probs size differs from l_values");
    check_prob(l_probs, "P(L)");
  }
  require(u_given_l.size() == nl && z_given_l.size() == nl && a_given.size() == nl && y_table.size() == nl,
          ErrorKind::invalid_argument, "conditional tables must have one entry per L level");
  for (std::size_t li = 0; li < nl; ++li) {
    const std::string at = " at l index " + std::to_string(li);
    require(u_given_l[li].size() == u_values.size(), ErrorKind::invalid_argument, "P(U|L) has wrong size" + at);
    require(z_given_l[li].size() == z_values.size(), ErrorKind::invalid_argument, "P(Z|L) has wrong size" + at);
    check_prob(u_given_l[li], "P(U|L)" + at);
    check_prob(z_given_l[li], "P(Z|L)" + at);
    require(a_given[li].size() == z_values.size(), ErrorKind::invalid_argument, "P(A|Z,U,L) has wrong size" + at);
    for (std::size_t zi = 0; zi < z_values.size(); ++zi) {
      require(a_given[li][zi].size() == u_values.size(), ErrorKind::invalid_argument,
              "P(A|Z,U,L) has wrong size" + at);
      for (std::size_t ui = 0; ui < u_values.size(); ++ui) {
        require(a_given[li][zi][ui].size() == a_values.size(), ErrorKind::invalid_argument,
                "P(A|Z,U,L) has wrong size" + at);
        check_prob(a_given[li][zi][ui], "P(A|Z,U,L)" + at);
      }
    }
    require(y_table[li].size() == u_values.size(), ErrorKind::invalid_argument, "outcome table has wrong size" + at);
    for (const auto& row : y_table[li])
      require(row.size() == a_values.size(), ErrorKind::invalid_argument, "outcome table has wrong size" + at);
  }
}

std::vector<DiscreteLaw::Atom> DiscreteLaw::atoms() const {
  std::vector<Atom> out;
  for (std::size_t li = 0; li < n_l(); ++li)
    for (std::size_t ui = 0; ui < u_values.size(); ++ui)
      for (std::size_t zi = 0; zi < z_values.size(); ++zi)
        for (std::size_t ai = 0; ai < a_values.size(); ++ai)
          out.push_back({li, ui, zi, ai,
                         prob_l(li) * u_given_l[li][ui] * z_given_l[li][zi] * a_given[li][zi][ui][ai]});
  return out;
}

std::vector<double> DiscreteLaw::l_of(std::size_t li) const {
  if (!has_l()) return {};
  return {l_values[li]};
}

std::size_t DiscreteLaw::a_index(double a) const { return exact_index(a_values, a, "treatment"); }

std::size_t DiscreteLaw::l_index(std::span<const double> l) const {
  if (!has_l()) return 0;
  require(l.size() == 1, ErrorKind::invalid_argument, "discrete law has a single covariate");
  return exact_index(l_values, l[0], "covariate");
}

double DiscreteLaw::prob_l(std::size_t li) const { return has_l() ? l_probs[li] : 1.0; }

double DiscreteLaw::prob_a_given_zl(std::size_t ai, std::size_t zi, std::size_t li) const {
  double s = 0.0;
  for (std::size_t ui = 0; ui < u_values.size(); ++ui) s += u_given_l[li][ui] * a_given[li][zi][ui][ai];
  return s;
}

double DiscreteLaw::prob_a_given_ul(std::size_t ai, std::size_t ui, std::size_t li) const {
  double s = 0.0;
  for (std::size_t zi = 0; zi < z_values.size(); ++zi) s += z_given_l[li][zi] * a_given[li][zi][ui][ai];
  return s;
}

double DiscreteLaw::prob_a_given_l(std::size_t ai, std::size_t li) const {
  double s = 0.0;
  for (std::size_t zi = 0; zi < z_values.size(); ++zi) s += z_given_l[li][zi] * prob_a_given_zl(ai, zi, li);
  return s;
}

double DiscreteLaw::prob_a(std::size_t ai) const {
  double s = 0.0;
  for (std::size_t li = 0; li < n_l(); ++li) s += prob_l(li) * prob_a_given_l(ai, li);
  return s;
}

double DiscreteLaw::theta(std::size_t ai) const {
  double s = 0.0;
  for (std::size_t li = 0; li < n_l(); ++li)
    for (std::size_t ui = 0; ui < u_values.size(); ++ui) s += prob_l(li) * u_given_l[li][ui] * y(li, ui, ai);
  return s;
}

WeightingFunction DiscreteLaw::weighting(const PiTable& pi, std::string id) const {
  std::map<std::vector<double>, double> values;
  for (std::size_t zi = 0; zi < z_values.size(); ++zi)
    for (std::size_t li = 0; li < n_l(); ++li) {
      std::vector<double> key{z_values[zi]};
      if (has_l()) key.push_back(l_values[li]);
      values[key] = pi.at(zi).at(li);
    }
  return WeightingFunction::table(std::move(id), std::move(values));
}

std::shared_ptr<FunctionalNuisance> DiscreteLaw::exact_nuisance(const PiTable& pi) const {
  validate();
  const std::size_t nl = n_l(), na = a_values.size();
  std::vector<double> rho(nl);
  std::vector<std::vector<NuisanceValues>> vals(na, std::vector<NuisanceValues>(nl));
  for (std::size_t li = 0; li < nl; ++li) {
    for (std::size_t zi = 0; zi < z_values.size(); ++zi) rho[li] += z_given_l[li][zi] * pi[zi][li];
    for (std::size_t ai = 0; ai < na; ++ai) {
      const double pal = prob_a_given_l(ai, li);
      double ez = 0.0, ey = 0.0, eyz = 0.0;
      for (std::size_t zi = 0; zi < z_values.size(); ++zi)
        for (std::size_t ui = 0; ui < u_values.size(); ++ui) {
          const double w = z_given_l[li][zi] * u_given_l[li][ui] * a_given[li][zi][ui][ai];
          ez += w * pi[zi][li];
          ey += w * y(li, ui, ai);
          eyz += w * y(li, ui, ai) * pi[zi][li];
        }
      auto& v = vals[ai][li];
      if (pal > 0.0) {
        v.eta = ey / pal;
        v.kappa = ez / pal - rho[li];
        v.mu = v.kappa != 0.0 ? (eyz / pal - v.eta * rho[li]) / v.kappa : std::numeric_limits<double>::quiet_NaN();
        v.delta = prob_a(ai) / pal;
      } else {
        v = {std::numeric_limits<double>::quiet_NaN(), 0.0, std::numeric_limits<double>::quiet_NaN(),
             std::numeric_limits<double>::quiet_NaN()};
      }
    }
  }
  const auto self = std::make_shared<DiscreteLaw>(*this);
  return std::make_shared<FunctionalNuisance>(
      has_l() ? 1 : 0, [self, rho](std::span<const double> l) { return rho[self->l_index(l)]; },
      [self, vals](double a, std::span<const double> l) {
        const auto& v = vals[self->a_index(a)][self->l_index(l)];
        require(std::isfinite(v.mu), ErrorKind::conditioning,
                "exact nuisances undefined at a=" + format_double(a) + " (zero mass or zero kappa)");
        return v;
      });
}

double DiscreteLaw::chi2(std::size_t ai, std::size_t li) const {
  const double pal = prob_a_given_l(ai, li);
  require(pal > 0.0, ErrorKind::low_density, "P(A=a|L=l) is zero");
  double s = 0.0;
  for (std::size_t zi = 0; zi < z_values.size(); ++zi) {
    const double r = prob_a_given_zl(ai, zi, li) / pal - 1.0;
    s += z_given_l[li][zi] * r * r;
  }
  return s;
}

double DiscreteLaw::omega_index(std::size_t ai, std::size_t ui, std::size_t li, const PiTable& pi) const {
  const double p_ul = prob_a_given_ul(ai, ui, li);
  const double p_l = prob_a_given_l(ai, li);
  require(p_l > 0.0, ErrorKind::low_density, "P(A=a|L=l) is zero");
  double rho = 0.0, num_ul = 0.0, num_l = 0.0;
  for (std::size_t zi = 0; zi < z_values.size(); ++zi) {
    const double pz = z_given_l[li][zi];
    rho += pz * pi[zi][li];
    num_ul += pz * a_given[li][zi][ui][ai] * pi[zi][li];
    num_l += pz * prob_a_given_zl(ai, zi, li) * pi[zi][li];
  }
  const double den = num_l / p_l - rho;
  require(den != 0.0, ErrorKind::conditioning, "weighting function is not relevant at this point");
  if (p_ul == 0.0) return 0.0;
  return p_ul / p_l * (num_ul / p_ul - rho) / den;
}

double DiscreteLaw::omega(double a, std::span<const double> u, std::span<const double> l,
                          const WeightingFunction& pi) const {
  PiTable table(z_values.size(), std::vector<double>(n_l()));
  for (std::size_t zi = 0; zi < z_values.size(); ++zi)
    for (std::size_t li = 0; li < n_l(); ++li) {
      const auto lv = l_of(li);
      table[zi][li] = pi(std::span<const double>(&z_values[zi], 1), lv);
    }
  require(u.size() == 1, ErrorKind::invalid_argument, "discrete law has a scalar latent variable");
  return omega_index(a_index(a), exact_index(u_values, u[0], "latent"), l_index(l), table);
}

Dataset DiscreteLaw::to_dataset(std::size_t scale) const {
  validate();
  std::vector<double> l, z, a, y, u;
  for (const auto& at : atoms()) {
    const double c = at.p * static_cast<double>(scale);
    const double r = std::round(c);
    require(std::abs(c - r) <= 1e-6, ErrorKind::invalid_argument,
            "atom probability times scale is not an integer; pick a scale matching the table denominators");
    for (long k = 0; k < static_cast<long>(r); ++k) {
      l.push_back(has_l() ? l_values[at.li] : 0.0);
      z.push_back(z_values[at.zi]);
      a.push_back(a_values[at.ai]);
      y.push_back(this->y(at.li, at.ui, at.ai));
      u.push_back(u_values[at.ui]);
    }
  }
  const auto n = static_cast<Eigen::Index>(a.size());
  require(n > 0, ErrorKind::empty_data, "scale too small: no rows generated");
  RowMatrix lm(n, has_l() ? 1 : 0), zm(n, 1), um(n, 1);
  Vector av(n), yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (has_l()) lm(i, 0) = l[k];
    zm(i, 0) = z[k];
    um(i, 0) = u[k];
    av[i] = a[k];
    yv[i] = y[k];
  }
  const auto [amin, amax] = std::minmax_element(a_values.begin(), a_values.end());
  return Dataset(std::move(lm), std::move(zm), std::move(av), std::move(yv), std::move(um),
                 Support{*amin, *amax});
}

EmpiricalMeasure DiscreteLaw::population_measure(const PiTable& pi) const {
  std::vector<double> zpi, w;
  std::vector<double> lv;
  for (std::size_t li = 0; li < n_l(); ++li)
    for (std::size_t zi = 0; zi < z_values.size(); ++zi) {
      zpi.push_back(pi[zi][li]);
      w.push_back(prob_l(li) * z_given_l[li][zi]);
      if (has_l()) lv.push_back(l_values[li]);
    }
  RowMatrix l(static_cast<Eigen::Index>(zpi.size()), has_l() ? 1 : 0);
  for (std::size_t k = 0; k < lv.size(); ++k) l(static_cast<Eigen::Index>(k), 0) = lv[k];
  return EmpiricalMeasure::weighted(std::move(zpi), std::move(l), std::move(w));
}

namespace {
std::vector<double> eighths(std::initializer_list<int> v) {
  std::vector<double> out;
  for (int x : v) out.push_back(x / 8.0);
  return out;
}

void fill_outcome(DiscreteLaw& law) {
  law.y_table.assign(law.n_l(), std::vector<std::vector<double>>(law.u_values.size(),
                                                               std::vector<double>(law.a_values.size())));
  for (std::size_t li = 0; li < law.n_l(); ++li) {
    const double l = law.has_l() ? law.l_values[li] : 0.0;
    for (std::size_t ui = 0; ui < law.u_values.size(); ++ui)
      for (std::size_t ai = 0; ai < law.a_values.size(); ++ai) {
        const double a = law.a_values[ai], u = law.u_values[ui];
        law.y_table[li][ui][ai] = a * (1.0 + 0.5 * l) + 2.0 * u + 0.3 * u * a + l + 0.25 * a * a;
      }
  }
}
}  // namespace

DiscreteLaw DiscreteLaw::additive_example(int variant, bool with_l) {
  DiscreteLaw law;
  if (with_l) {
    law.l_values = {0.0, 1.0};
    law.l_probs = eighths({3, 5});
  }
  law.u_values = {-1.0, 0.0, 1.0};
  law.z_values = {0.0, 1.0};
  law.a_values = {-1.0, 0.0, 1.0};
  // Per-L tables in eighths. q1 depends on (u, l), q2 on (z, l); p = (q1 + q2) / 2.
  const std::vector<std::vector<double>> u_tab{eighths({2, 3, 3}), eighths({4, 2, 2})};
  const std::vector<std::vector<double>> z_tab{eighths({3, 5}), eighths({6, 2})};
  std::vector<std::vector<std::vector<double>>> q1{
      {eighths({4, 2, 2}), eighths({1, 3, 4}), eighths({2, 2, 4})},
      {eighths({3, 3, 2}), eighths({2, 4, 2}), eighths({5, 1, 2})}};
  std::vector<std::vector<std::vector<double>>> q2{{eighths({6, 1, 1}), eighths({1, 2, 5})},
                                                   {eighths({5, 2, 1}), eighths({2, 1, 5})}};
  const int v = ((variant % 3) + 3) % 3;
  for (auto& per_l : q1)
    for (auto& row : per_l) std::rotate(row.begin(), row.begin() + v, row.end());
  std::vector<std::vector<double>> zt = z_tab, ut = u_tab;
  if (v == 2) {
    std::swap(zt[0], zt[1]);
    std::reverse(ut[0].begin(), ut[0].end());
  }
  const std::size_t nl = with_l ? 2 : 1;
  for (std::size_t li = 0; li < nl; ++li) {
    law.u_given_l.push_back(ut[li]);
    law.z_given_l.push_back(zt[li]);
    std::vector<std::vector<std::vector<double>>> per_z;
    for (std::size_t zi = 0; zi < 2; ++zi) {
      std::vector<std::vector<double>> per_u;
      for (std::size_t ui = 0; ui < 3; ++ui) {
        std::vector<double> p(3);
        for (std::size_t ai = 0; ai < 3; ++ai) p[ai] = 0.5 * q1[li][ui][ai] + 0.5 * q2[li][zi][ai];
        per_u.push_back(p);
      }
      per_z.push_back(per_u);
    }
    law.a_given.push_back(per_z);
  }
  fill_outcome(law);
  law.validate();
  return law;
}

DiscreteLaw DiscreteLaw::multiplicative_example() {
  DiscreteLaw law;
  law.l_values = {0.0, 1.0};
  law.l_probs = eighths({4, 4});
  law.u_values = {-1.0, 1.0};
  law.z_values = {-1.0, 1.0};
  law.a_values = {-1.0, 0.0, 1.0};
  for (std::size_t li = 0; li < 2; ++li) {
    law.u_given_l.push_back(li == 0 ? eighths({2, 6}) : eighths({5, 3}));
    law.z_given_l.push_back(eighths({4, 4}));
    std::vector<std::vector<std::vector<double>>> per_z;
    for (double z : law.z_values) {
      std::vector<std::vector<double>> per_u;
      for (double u : law.u_values) per_u.push_back(z * u > 0 ? eighths({6, 1, 1}) : eighths({1, 1, 6}));
      per_z.push_back(per_u);
    }
    law.a_given.push_back(per_z);
  }
  fill_outcome(law);
  law.validate();
  return law;
}

DiscreteLaw DiscreteLaw::uniform_example() {
  DiscreteLaw law;
  law.l_values = {0.0, 1.0};
  law.l_probs = {0.5, 0.5};
  law.u_values = {-1.0, 1.0};
  law.z_values = {0.0, 1.0};
  law.a_values = {-1.0, 0.0, 1.0};
  const double third = 1.0 / 3.0;
  for (std::size_t li = 0; li < 2; ++li) {
    law.u_given_l.push_back({0.5, 0.5});
    law.z_given_l.push_back({0.5, 0.5});
    law.a_given.push_back(std::vector<std::vector<std::vector<double>>>(
        2, std::vector<std::vector<double>>(2, {third, third, 1.0 - 2.0 * third})));
    law.y_table.push_back({{-1.0 + law.l_values[li], -1.0 + law.l_values[li], -1.0 + law.l_values[li]},
                           {1.0 + law.l_values[li], 1.0 + law.l_values[li], 1.0 + law.l_values[li]}});
  }
  law.validate();
  return law;
}

// ---------------------------------------------------------------------------

const BenchmarkCell& BenchmarkReport::cell(ScoreTag tag) const {
  for (const auto& c : cells)
    if (c.tag == tag) return c;
  fail(ErrorKind::misuse, "benchmark has no cell for '" + std::string(to_string(tag)) + "'");
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  require(cfg.reps >= 2, ErrorKind::invalid_argument, "benchmark needs at least 2 replications");
  require(cfg.variant != DgpVariant::discrete_toy, ErrorKind::invalid_argument,
          "benchmark runs on continuous-treatment designs only");
  require(!cfg.tags.empty(), ErrorKind::invalid_argument, "benchmark needs at least one estimator");
  BenchmarkReport rep;
  rep.n = cfg.n;
  rep.reps = cfg.reps;
  rep.interval = cfg.interval;
  rep.seed = cfg.seed;
  rep.anchor = cfg.anchor.value_or(0.5 * (cfg.interval.lo + cfg.interval.hi));
  rep.points = cfg.points;
  if (rep.points.empty()) rep.points = {rep.anchor - 0.1, rep.anchor, rep.anchor + 0.1};
  rep.grid = cfg.interval.grid(cfg.drf.grid_size);
  const std::size_t nt = cfg.tags.size(), g = rep.grid.size(), np = rep.points.size();

  struct Replicate {
    std::vector<std::vector<double>> grid_theta;   // [tag][grid]
    std::vector<std::vector<double>> point_theta;  // [tag][point]
    std::vector<double> h;
    std::vector<double> a;
    std::string error;
  };
  std::vector<Replicate> out(cfg.reps);
  DrfConfig drf = cfg.drf;
  drf.variance = false;

  for_each_index(cfg.policy, cfg.reps, [&](std::size_t m) {
    auto& r = out[m];
    const std::uint64_t rs = derive_seed(cfg.seed, 41, m);
    try {
      const Dataset data = simulate_dgp({cfg.n, derive_seed(rs, 1), cfg.variant});
      const Dataset aux = simulate_dgp({cfg.aux_n, derive_seed(rs, 2), cfg.variant});
      const auto pi = make_density_rwf(aux, rep.anchor, cfg.nuisance.density);
      CrossfitConfig cc;
      cc.folds = cfg.folds;
      cc.tags = cfg.tags;
      cc.nuisance = cfg.nuisance;
      cc.seed = derive_seed(rs, 3);
      cc.emp_cap = cfg.emp_cap;
      cc.policy = cfg.policy;
      const auto res = crossfit_scores(data, pi, cfg.interval, cc);
      const std::span<const double> a(data.a().data(), data.size());
      for (std::size_t t = 0; t < nt; ++t) {
        const auto& s = res.scores[t].values;
        const auto est = estimate_drf_llkr(s, a, cfg.interval, drf, cfg.policy);
        for (std::size_t i = 0; i < g; ++i)
          require(!est.missing[i], ErrorKind::benchmark,
                  std::string(to_string(cfg.tags[t])) + " curve missing at a=" + format_double(est.grid[i]) +
                      ": " + est.point_errors[i]);
        r.grid_theta.push_back(est.theta);
        const LocalLinearSmoother sm(a, s, drf.kernel);
        std::vector<double> pt(np);
        for (std::size_t p = 0; p < np; ++p) pt[p] = sm.predict(rep.points[p], est.h);
        r.point_theta.push_back(std::move(pt));
        r.h.push_back(est.h);
      }
      r.a.assign(a.begin(), a.end());
    } catch (const Error& e) {
      r.error = e.what();
      r.grid_theta.clear();
      r.point_theta.clear();
      r.h.clear();
    }
  });

  std::vector<double> pooled;
  std::vector<std::size_t> ok;
  for (std::size_t m = 0; m < cfg.reps; ++m) {
    if (!out[m].error.empty()) {
      ++rep.failures;
      rep.failure_messages.push_back("replicate " + std::to_string(m) + ": " + out[m].error);
      continue;
    }
    ok.push_back(m);
    pooled.insert(pooled.end(), out[m].a.begin(), out[m].a.end());
  }
  if (static_cast<double>(rep.failures) > 0.1 * static_cast<double>(cfg.reps) || ok.empty())
    fail(ErrorKind::benchmark, std::to_string(rep.failures) + " of " + std::to_string(cfg.reps) +
                                   " replications failed; first: " + rep.failure_messages.front());

  // Quadrature weights p_A(a) da over the interval, normalized to sum to one.
  const auto p_a = CondDensityModel::fit(pooled, RowMatrix(static_cast<Eigen::Index>(pooled.size()), 0),
                                         cfg.nuisance.density, Support{-1.0, 1.0});
  rep.weights.assign(g, 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    const double da = (i == 0 ? 0.0 : rep.grid[i] - rep.grid[i - 1]) + (i + 1 == g ? 0.0 : rep.grid[i + 1] - rep.grid[i]);
    rep.weights[i] = p_a.density(rep.grid[i], {}) * 0.5 * da;
    wsum += rep.weights[i];
  }
  require(wsum > 0.0, ErrorKind::benchmark, "treatment density vanishes on the interval");
  for (double& w : rep.weights) w /= wsum;

  const double mcount = static_cast<double>(ok.size());
  for (std::size_t t = 0; t < nt; ++t) {
    BenchmarkCell c;
    c.tag = cfg.tags[t];
    auto summarize = [&](double truth, auto get, double& bias, double& rmse) {
      double s = 0.0, s2 = 0.0;
      for (auto m : ok) {
        const double e = get(m) - truth;
        s += e;
        s2 += e * e;
      }
      bias = std::abs(s / mcount);
      rmse = std::sqrt(s2 / mcount);
    };
    c.grid_bias.resize(g);
    c.grid_rmse.resize(g);
    for (std::size_t i = 0; i < g; ++i)
      summarize(true_drf(cfg.variant, rep.grid[i]), [&](std::size_t m) { return out[m].grid_theta[t][i]; },
                c.grid_bias[i], c.grid_rmse[i]);
    c.point_bias.resize(np);
    c.point_rmse.resize(np);
    for (std::size_t p = 0; p < np; ++p)
      summarize(true_drf(cfg.variant, rep.points[p]), [&](std::size_t m) { return out[m].point_theta[t][p]; },
                c.point_bias[p], c.point_rmse[p]);
    double ms = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      c.interval_bias += rep.weights[i] * c.grid_bias[i];
      ms += rep.weights[i] * c.grid_rmse[i] * c.grid_rmse[i];
    }
    c.interval_rmse = std::sqrt(ms);
    for (auto m : ok) c.mean_h += out[m].h[t] / mcount;
    rep.cells.push_back(std::move(c));
  }
  return rep;
}

}  // namespace ivdrf
