#include <cmath>

#include "doctest.h"
#include "ivdrf/diagnostics.hpp"
#include "ivdrf/error.hpp"
#include "ivdrf/sim.hpp"
#include "oracles.hpp"

using namespace ivdrf;

TEST_SUITE("diagnostics") {
  TEST_CASE("l grids use levels for discrete covariates and quantiles otherwise") {
    const auto law = DiscreteLaw::additive_example(0, true);
    const auto g = quantile_l_grid(law.to_dataset(8192));
    REQUIRE(g.rows() == 2);
    CHECK(g(0, 0) == 0.0);
    CHECK(g(1, 0) == 1.0);
    const auto d = simulate_dgp({1000, 1, DgpVariant::paper_main});
    const auto c = quantile_l_grid(d, 9);
    CHECK(c.rows() == 9);
    for (Eigen::Index i = 1; i < 9; ++i) CHECK(c(i, 0) > c(i - 1, 0));
    CHECK(std::abs(c(4, 0)) < 0.1);
  }

  TEST_CASE("estimated chi-square divergence equals enumeration on discrete laws") {
    for (int v = 0; v < 3; ++v) {
      const auto law = DiscreteLaw::additive_example(v, true);
      const auto d = law.to_dataset(8192);
      RelevanceConfig cfg;
      cfg.neighbours = 100000;
      const auto curve = chi2_divergence_curve(d, law.a_values, quantile_l_grid(d), cfg);
      for (std::size_t ai = 0; ai < law.a_values.size(); ++ai)
        for (std::size_t li = 0; li < 2; ++li) {
          CHECK(std::abs(curve.divergence[ai][li] - oracle::chi2(law, ai, li)) <= 1e-10);
          CHECK_FALSE(curve.floor_hit[ai][li]);
        }
    }
  }

  TEST_CASE("relevance curve on the main design is positive and flags nothing at the centre") {
    const auto d = simulate_dgp({3000, 2, DgpVariant::paper_main});
    const std::vector<double> a{-0.5, 0.0, 0.5};
    const auto curve = chi2_divergence_curve(d, a, quantile_l_grid(d, 3));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(curve.min_divergence[i] > 0.05);
      CHECK_FALSE(curve.below_threshold[i]);
    }
  }

  TEST_CASE("binary instruments force a sign change of kappa") {
    const auto d = simulate_dgp({4000, 3, DgpVariant::binary_iv_crossing});
    const auto pi = WeightingFunction::coordinate(0, 1.0);
    const auto grid = TargetInterval(-0.9, 0.9).grid(37);
    const auto map = kappa_sign_map(d, pi, grid, quantile_l_grid(d, 5));
    for (char c : map.l_has_crossing) CHECK(c);
    const auto v = check_urwf(d, pi, {-0.9, 0.9});
    CHECK_FALSE(v.pass);
    CHECK_FALSE(v.sign_constant);
  }

  TEST_CASE("uniform relevance verdicts on the main design") {
    const auto d = simulate_dgp({5000, 4, DgpVariant::paper_main});
    const auto aux = simulate_dgp({5000, 40, DgpVariant::paper_main});
    const auto dens = make_density_rwf(aux, 0.5, {});
    const auto ok = check_urwf(d, dens, {0.25, 0.75});
    CHECK(ok.pass);
    CHECK(ok.sign_constant);
    CHECK(ok.min_abs_kappa >= ok.epsilon);
    const auto bad = check_urwf(d, WeightingFunction::coordinate(0, 3.0), {-1.0, 1.0});
    CHECK_FALSE(bad.pass);
    const auto km = KappaModel::fit(d, dens.evaluate(d), {});
    const PaperDgpOracle truth({OracleWeighting::Kind::true_density, 0.5});
    for (double a : {0.3, 0.5, 0.7}) {
      const double l[1] = {0.0};
      CHECK(std::abs(km(a, l) - truth.kappa(a, 0.0)) < 0.04);
    }
  }

  TEST_CASE("finite covers by density weighting functions") {
    const auto d = simulate_dgp({4000, 5, DgpVariant::paper_main});
    const auto plan = cover_interval(d, -0.75, 0.75);
    CHECK(plan.members.size() >= 2);
    CHECK(plan.covers());
    for (const auto& m : plan.members) {
      CHECK(m.verdict.pass);
      CHECK(m.radius >= 0.01);
    }
    CHECK(plan.members.front().center - plan.members.front().radius < -0.75);
  }

  TEST_CASE("AIV weight identity on sampled laws") {
    const auto add = DiscreteLaw::additive_example(1, true);
    const auto pi = oracle::linear_pi(add, 0.25);
    const auto d = add.to_dataset(8192);
    const auto w = add.weighting(pi);
    for (auto ai : oracle::relevant_a(add, pi)) {
      const auto r = aiv_weight_check(d, add, w, add.a_values[ai]);
      CHECK(r.max_abs_dev <= 1e-10);
      CHECK_FALSE(r.violation);
      for (const auto& b : r.bins) CHECK(std::abs(b.mean - 1.0) <= 1e-10);
    }
    const auto mul = DiscreteLaw::multiplicative_example();
    const auto mpi = oracle::linear_pi(mul);
    const auto md = mul.to_dataset(8192);
    bool any = false;
    for (auto ai : oracle::relevant_a(mul, mpi)) any = any || aiv_weight_check(md, mul, mul.weighting(mpi), mul.a_values[ai]).violation;
    CHECK(any);
    const Dataset no_u(d.l(), d.z(), d.a(), d.y());
    try {
      aiv_weight_check(no_u, add, w, 0.0);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::misuse);
    }
  }
}
