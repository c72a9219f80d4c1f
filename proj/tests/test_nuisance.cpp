#include <cmath>
#include <random>

#include "doctest.h"
#include "ivdrf/density.hpp"
#include "ivdrf/error.hpp"
#include "ivdrf/nuisance.hpp"
#include "ivdrf/regression.hpp"
#include "ivdrf/sim.hpp"
#include "ivdrf/weighting.hpp"
#include "oracles.hpp"

using namespace ivdrf;

namespace {

RowMatrix column(const std::vector<double>& x) {
  RowMatrix m(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = x[i];
  return m;
}

}  // namespace

TEST_SUITE("nuisance") {
  TEST_CASE("spline basis is a partition of unity") {
    const auto b = SplineBasis1D::cubic(-1, 1, 8);
    std::vector<double> v(4);
    for (double x = -1; x <= 1; x += 0.037) {
      b.eval(x, v.data());
      double s = 0;
      for (double e : v) s += e;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto lv = SplineBasis1D::levels({0, 1, 3});
    CHECK(lv.discrete());
    CHECK(lv.size() == 3);
  }

  TEST_CASE("penalized splines recover smooth and linear functions") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    std::normal_distribution<double> e(0, 0.1);
    std::vector<double> x, y, lin;
    for (int i = 0; i < 2000; ++i) {
      x.push_back(u(rng));
      y.push_back(std::sin(2 * x.back()) + e(rng));
      lin.push_back(1.5 - 2.0 * x.back());
    }
    const auto X = column(x);
    for (auto method : {RegressionMethod::penalized_spline, RegressionMethod::local_linear}) {
      RegressionConfig cfg;
      cfg.method = method;
      const auto m = fit_regression(X, y, cfg);
      for (double q : {-0.8, -0.2, 0.4, 0.9}) {
        const double qv[1] = {q};
        CHECK(std::abs(m->predict(qv) - std::sin(2 * q)) < 0.05);
      }
      const auto ml = fit_regression(X, lin, cfg);
      for (double q : {-0.9, 0.0, 0.7}) {
        const double qv[1] = {q};
        CHECK(ml->predict(qv) == doctest::Approx(1.5 - 2.0 * q).epsilon(1e-6));
      }
    }
    CHECK(parse_regression_method("local_linear") == RegressionMethod::local_linear);
    CHECK_THROWS_AS(parse_regression_method("forest"), Error);
  }

  TEST_CASE("level bases reproduce cell means on discrete designs") {
    std::vector<double> l, a, y;
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> pick(0, 2);
    std::normal_distribution<double> e(0, 1);
    double sums[3][3] = {}, counts[3][3] = {};
    for (int i = 0; i < 3000; ++i) {
      const int ai = pick(rng), li = pick(rng);
      a.push_back(ai - 1.0);
      l.push_back(li);
      y.push_back(ai * 0.7 + li * li + e(rng));
      sums[ai][li] += y.back();
      counts[ai][li] += 1;
    }
    RowMatrix X(3000, 2);
    for (int i = 0; i < 3000; ++i) {
      X(i, 0) = a[static_cast<std::size_t>(i)];
      X(i, 1) = l[static_cast<std::size_t>(i)];
    }
    RegressionConfig cfg;
    cfg.penalty = 0.0;
    const auto m = fit_regression(X, y, cfg);
    for (int ai = 0; ai < 3; ++ai)
      for (int li = 0; li < 3; ++li) {
        const double q[2] = {ai - 1.0, static_cast<double>(li)};
        CHECK(m->predict(q) == doctest::Approx(sums[ai][li] / counts[ai][li]).epsilon(1e-6));
      }
  }

  TEST_CASE("regression panels match pointwise predictions") {
    const auto d = simulate_dgp({1500, 3, DgpVariant::paper_main});
    const auto X = design_al(d);
    const std::vector<double> y(d.y().data(), d.y().data() + d.size());
    const auto m = fit_regression(X, y, {});
    RowMatrix tails(3, 1);
    tails << -0.3, 0.0, 0.4;
    const auto p = m->panel(tails);
    std::vector<double> out(3);
    p->eval(0.25, out.data());
    for (int j = 0; j < 3; ++j) {
      const double q[2] = {0.25, tails(j, 0)};
      CHECK(out[static_cast<std::size_t>(j)] == doctest::Approx(m->predict(q)).epsilon(1e-12));
    }
  }

  TEST_CASE("conditional density estimates integrate to one") {
    const auto d = simulate_dgp({3000, 4, DgpVariant::paper_main});
    const std::span<const double> a(d.a().data(), d.size());
    const auto model = CondDensityModel::fit(a, d.l(), {}, Support{-1, 1});
    for (double l : {-0.3, 0.0, 0.3}) {
      const double lv[1] = {l};
      double s = 0;
      const int m = 2000;
      for (int k = 0; k < m; ++k) s += model.density(-1.0 + (k + 0.5) * 2.0 / m, lv) * 2.0 / m;
      CHECK(s == doctest::Approx(1.0).epsilon(0.01));
    }
    const auto marg = CondDensityModel::fit(a, RowMatrix(static_cast<Eigen::Index>(d.size()), 0), {}, Support{-1, 1});
    for (double q : {-0.5, 0.0, 0.5}) CHECK(std::abs(marg.density(q, {}) - paper_dgp::p_a(q)) < 0.12);
  }

  TEST_CASE("frequency mode is exact on discrete data") {
    const auto law = DiscreteLaw::additive_example(0, true);
    const auto d = law.to_dataset(8192);
    const std::span<const double> a(d.a().data(), d.size());
    const auto model = CondDensityModel::fit(a, d.l(), {});
    CHECK(model.response_discrete());
    for (std::size_t ai = 0; ai < law.a_values.size(); ++ai)
      for (std::size_t li = 0; li < 2; ++li) {
        const auto l = law.l_of(li);
        CHECK(std::abs(model.density(law.a_values[ai], l) - oracle::p_al(law, ai, li)) < 1e-12);
      }
    const double missing[1] = {7.0};
    CHECK_FALSE(model.try_density(0.0, missing).has_value());
    try {
      model.density(0.0, missing);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::low_density);
    }
  }

  TEST_CASE("weighting functions") {
    const auto d = simulate_dgp({500, 1, DgpVariant::paper_main});
    const auto c = parse_weighting_spec("coordinate:0", d, {});
    CHECK(c.kind() == WeightingKind::raw_coordinate);
    double zmax = 0;
    for (Eigen::Index i = 0; i < 500; ++i) zmax = std::max(zmax, std::abs(d.z()(i, 0)));
    CHECK(c.bound() == doctest::Approx(1.5 * zmax));
    const double z[1] = {0.3}, l[1] = {0.1};
    CHECK(c(z, l) == 0.3);
    const auto p = parse_weighting_spec("poly:0:2", d, {});
    CHECK(p(z, l) == doctest::Approx(0.09));
    const auto k = parse_weighting_spec("constant:2", d, {});
    CHECK(k(z, l) == 2.0);
    const auto dens = parse_weighting_spec("density@0.5", d, {});
    CHECK(dens.kind() == WeightingKind::conditional_density);
    CHECK(dens.anchor() == 0.5);
    const double zbig[1] = {1e6};
    CHECK(std::abs(c(zbig, l)) <= c.bound());
    for (const char* bad : {"coordinate:3", "poly:0", "density@x", "nothing"}) {
      INFO(bad);
      CHECK_THROWS_AS(parse_weighting_spec(bad, d, {}), Error);
    }
    const auto t = WeightingFunction::table("t", {{{0.0, 1.0}, 2.5}});
    const double tz[1] = {0.0}, tl[1] = {1.0}, tl2[1] = {2.0};
    CHECK(t(tz, tl) == 2.5);
    CHECK_THROWS_AS(t(tz, tl2), Error);
  }

  TEST_CASE("trained nuisances approximate the oracle on the main design") {
    const auto d = simulate_dgp({8000, 6, DgpVariant::paper_main});
    const auto pi = oracle_weighting({OracleWeighting::Kind::true_density, 0.5});
    const auto fit = train_nuisance(d, pi, {0.25, 0.75}, {});
    const PaperDgpOracle truth({OracleWeighting::Kind::true_density, 0.5});
    for (double a : {0.3, 0.5, 0.7})
      for (double l : {-0.25, 0.0, 0.25}) {
        const double lv[1] = {l};
        const auto v = fit->at(a, lv);
        const auto t = truth.at(a, lv);
        CHECK(std::abs(v.kappa - t.kappa) < 0.03);
        CHECK(std::abs(v.eta - t.eta) < 0.1);
        CHECK(std::abs(v.delta - t.delta) < 0.25);
        CHECK(std::abs(v.mu - t.mu) < 0.35);
        CHECK(std::abs(fit->rho(lv) - truth.rho(lv)) < 0.02);
      }
    RowMatrix ls(2, 1);
    ls << -0.2, 0.3;
    const auto panel = fit->panel(ls);
    double mu[2], ka[2], et[2];
    panel->eval(0.45, mu, ka, et);
    for (int j = 0; j < 2; ++j) {
      const double lv[1] = {ls(j, 0)};
      const auto v = fit->at(0.45, lv);
      CHECK(mu[j] == doctest::Approx(v.mu).epsilon(1e-10));
      CHECK(ka[j] == doctest::Approx(v.kappa).epsilon(1e-10));
      CHECK(et[j] == doctest::Approx(v.eta).epsilon(1e-10));
    }
  }

  TEST_CASE("kappa clipping keeps the sign and respects the floor") {
    const auto d = simulate_dgp({2000, 7, DgpVariant::paper_main});
    NuisanceConfig cfg;
    cfg.kappa_floor = 0.05;
    const auto fit = train_nuisance(d, WeightingFunction::coordinate(0, 10.0), {-0.5, 0.5}, cfg);
    CHECK(fit->kappa_floor() == 0.05);
    CHECK(fit->clip_kappa(0.0, 0.01) == 0.05);
    CHECK(fit->clip_kappa(0.0, -0.01) == -0.05);
    CHECK(fit->clip_kappa(0.0, 0.2) == 0.2);
    for (double a = -0.9; a <= 0.9; a += 0.1) {
      const double lv[1] = {0.1};
      CHECK(std::abs(fit->at(a, lv).kappa) >= 0.05);
    }
    CHECK(fit->clip_counts().kappa_clipped_total >= 2);
  }
}
