#include <cmath>

#include "doctest.h"
#include "ivdrf/error.hpp"
#include "ivdrf/scores.hpp"
#include "ivdrf/sim.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace ivdrf;

namespace {

std::vector<DiscreteLaw> laws_with_l() {
  return {DiscreteLaw::additive_example(0, true), DiscreteLaw::additive_example(1, true),
          DiscreteLaw::additive_example(2, true)};
}

}  // namespace

TEST_SUITE("scores") {
  TEST_CASE("library exact nuisances agree with the table oracle") {
    for (const auto& law : laws_with_l()) {
      const auto pi = oracle::linear_pi(law, 0.25);
      const auto exact = law.exact_nuisance(pi);
      for (auto ai : oracle::relevant_a(law, pi))
        for (std::size_t li = 0; li < law.l_values.size(); ++li) {
          const auto o = oracle::nuisance(law, pi, ai, li);
          const auto l = law.l_of(li);
          const auto v = exact->at(law.a_values[ai], l);
          CHECK(std::abs(v.mu - o.mu) < 1e-12);
          CHECK(std::abs(v.kappa - o.kappa) < 1e-12);
          CHECK(std::abs(v.eta - o.eta) < 1e-12);
          CHECK(std::abs(v.delta - o.delta) < 1e-12);
          CHECK(std::abs(exact->rho(l) - o.rho) < 1e-12);
        }
      for (std::size_t ai = 0; ai < law.a_values.size(); ++ai)
        CHECK(std::abs(law.theta(ai) - oracle::theta(law, ai)) < 1e-14);
    }
  }

  TEST_CASE("every score family identifies theta on additive laws") {
    std::vector<DiscreteLaw> laws = laws_with_l();
    for (int v = 0; v < 3; ++v) laws.push_back(DiscreteLaw::additive_example(v, false));
    for (const auto& law : laws)
      for (double c : {0.0, 0.5}) {
        const auto pi = oracle::linear_pi(law, c);
        REQUIRE(oracle::relevant_a(law, pi).size() >= 2);
        for (const auto& r : suite::identification(law, pi)) {
          INFO(r.score);
          CHECK(r.checks >= 2);
          CHECK(r.max_error <= 1e-10);
        }
      }
  }

  TEST_CASE("identification fails without additivity") {
    const auto law = DiscreteLaw::multiplicative_example();
    const auto pi = oracle::linear_pi(law);
    const auto res = suite::identification(law, pi);
    CHECK(res.front().score == "aipw");
    CHECK(res.front().max_error > 1e-3);
  }

  TEST_CASE("NUC scores target the confounded regression functional") {
    const auto law = DiscreteLaw::additive_example(0, true);
    const auto pi = oracle::linear_pi(law);
    const auto alpha = suite::oracle_nuisance(law, pi);
    const auto emp = suite::population(law, pi);
    for (auto ai : oracle::relevant_a(law, pi)) {
      double target = 0.0;
      for (std::size_t li = 0; li < law.l_values.size(); ++li)
        target += law.l_probs[li] * oracle::nuisance(law, pi, ai, li).eta;
      const double m = suite::conditional_mean(law, pi, ai, [&](const Observation& o, double) {
        return nuc_scores(o, *alpha, emp).aipw;
      });
      const double mi = suite::conditional_mean(law, pi, ai, [&](const Observation& o, double) {
        return nuc_scores(o, *alpha, emp).ipw;
      });
      CHECK(std::abs(m - target) < 1e-10);
      CHECK(std::abs(mi - target) < 1e-10);
      // Confounding: the NUC target differs from theta.
      CHECK(std::abs(target - oracle::theta(law, ai)) > 1e-3);
    }
  }

  TEST_CASE("mixed bias: single perturbations vanish, pairs are second order") {
    for (const auto& law : laws_with_l()) {
      const auto pi = oracle::linear_pi(law, 0.25);
      const auto r = suite::mixed_bias(law, pi);
      CHECK(r.single_max <= 1e-10);
      for (const auto& [name, slope] : r.pair_slopes) {
        INFO(name);
        CHECK(slope == doctest::Approx(2.0).epsilon(0.15));
      }
    }
  }

  TEST_CASE("panel and reference scoring agree; serial equals parallel") {
    const auto law = DiscreteLaw::additive_example(1, true);
    const auto pi = oracle::linear_pi(law, 0.25);
    const auto data = law.to_dataset(8192);
    const auto alpha = law.exact_nuisance(pi);
    const auto w = law.weighting(pi);
    const auto zpi = w.evaluate(data);
    const auto as = oracle::relevant_a(law, pi);
    std::vector<Index> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      for (auto ai : as)
        if (data[i].a == law.a_values[ai]) rows.push_back(i);
    const auto emp = EmpiricalMeasure::from_rows(data, zpi, rows);
    const std::vector<ScoreTag> tags{ScoreTag::aipw_iv, ScoreTag::ipw_iv, ScoreTag::or_iv,
                                     ScoreTag::aipw_nuc, ScoreTag::ipw_nuc, ScoreTag::or_nuc};
    std::vector<std::vector<double>> fast(tags.size()), ref(tags.size()), par(tags.size());
    score_rows(data, zpi, rows, *alpha, emp, tags, fast, ExecPolicy::serial, false);
    score_rows(data, zpi, rows, *alpha, emp, tags, ref, ExecPolicy::serial, true);
    score_rows(data, zpi, rows, *alpha, emp, tags, par, ExecPolicy::parallel, false);
    for (std::size_t t = 0; t < tags.size(); ++t) {
      CHECK(fast[t] == par[t]);
      for (auto i : rows) CHECK(std::abs(fast[t][i] - ref[t][i]) < 1e-10);
    }
    // Single-observation functions give the same numbers.
    for (std::size_t r = 0; r < rows.size(); r += 97) {
      const auto o = data[rows[r]];
      CHECK(std::abs(aipw_score(o, zpi[rows[r]], *alpha, emp) - fast[0][rows[r]]) < 1e-10);
      CHECK(std::abs(ipw_score(o, zpi[rows[r]], *alpha) - fast[1][rows[r]]) < 1e-10);
    }
  }

  TEST_CASE("sample mean of scores on an exact law sample equals theta") {
    const auto law = DiscreteLaw::additive_example(0, true);
    const auto pi = oracle::linear_pi(law);
    const auto data = law.to_dataset(8192);
    const auto alpha = law.exact_nuisance(pi);
    const auto zpi = law.weighting(pi).evaluate(data);
    const auto emp = suite::population(law, pi);
    std::vector<Index> rows;
    for (std::size_t i = 0; i < data.size(); ++i) rows.push_back(i);
    const std::vector<ScoreTag> tags{ScoreTag::aipw_iv};
    std::vector<std::vector<double>> out(1);
    const auto as = oracle::relevant_a(law, pi);
    std::vector<Index> keep;
    for (auto i : rows)
      for (auto ai : as)
        if (data[i].a == law.a_values[ai]) keep.push_back(i);
    score_rows(data, zpi, keep, *alpha, emp, tags, out, ExecPolicy::parallel);
    for (auto ai : as) {
      double s = 0;
      std::size_t c = 0;
      for (auto i : keep)
        if (data[i].a == law.a_values[ai]) {
          s += out[0][i];
          ++c;
        }
      CHECK(std::abs(s / static_cast<double>(c) - oracle::theta(law, ai)) < 1e-10);
    }
    // psi_q with q = 1 on the relevant values is the p_A-weighted average of theta.
    const InterventionQ q{[](double) { return 1.0; }, -2.0, 2.0};
    std::vector<double> sc, av;
    double expect = 0.0, mass = 0.0;
    for (auto i : keep) {
      sc.push_back(out[0][i]);
      av.push_back(data[i].a);
    }
    for (auto ai : as) {
      expect += oracle::p_a(law, ai) * oracle::theta(law, ai);
      mass += oracle::p_a(law, ai);
    }
    CHECK(std::abs(estimate_psi_q(sc, av, q) - expect / mass) < 1e-10);
    CHECK_THROWS_AS(estimate_psi_q(sc, av, q, TargetInterval(-1, 1)), Error);
  }

  TEST_CASE("misuse of special score tags") {
    const auto law = DiscreteLaw::additive_example(0, true);
    const auto pi = oracle::linear_pi(law);
    const auto data = law.to_dataset(8192);
    const auto alpha = law.exact_nuisance(pi);
    const auto zpi = law.weighting(pi).evaluate(data);
    const auto emp = suite::population(law, pi);
    const std::vector<Index> rows{0};
    std::vector<std::vector<double>> out(1);
    const std::vector<ScoreTag> deg{ScoreTag::degenerate_iv}, mc{ScoreTag::multicat_iv};
    try {
      score_rows(data, zpi, rows, *alpha, emp, deg, out);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::misuse);
    }
    CHECK_THROWS_AS(score_rows(data, zpi, rows, *alpha, emp, mc, out), Error);
    CHECK(parse_score_tag("aipw_iv") == ScoreTag::aipw_iv);
    CHECK(to_string(ScoreTag::or_nuc) == "or_nuc");
    CHECK(is_nuc(ScoreTag::ipw_nuc));
    CHECK_THROWS_AS(parse_score_tag("aipw"), Error);
  }

  TEST_CASE("multicat score guards the propensity floor") {
    const auto law = DiscreteLaw::additive_example(0, true);
    const auto pi = oracle::linear_pi(law);
    const auto alpha = law.exact_nuisance(pi);
    const auto data = law.to_dataset(8192);
    const auto as = oracle::relevant_a(law, pi);
    Observation o = data[0];
    const double target = law.a_values[as.front()];
    o.a = target;
    try {
      multicat_score(o, 1.0, *alpha, target, [](double, std::span<const double>) { return 0.0; });
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::propensity);
    }
  }
}
