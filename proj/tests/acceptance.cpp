// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ivdrf/crossfit.hpp"
#include "ivdrf/diagnostics.hpp"
#include "ivdrf/drf.hpp"
#include "ivdrf/error.hpp"
#include "ivdrf/llkr.hpp"
#include "ivdrf/rng.hpp"
#include "ivdrf/sim.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace ivdrf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << x;
  return s.str();
}

std::vector<DiscreteLaw> toy_laws() {
  return {DiscreteLaw::additive_example(0, true), DiscreteLaw::additive_example(1, true),
          DiscreteLaw::additive_example(2, true), DiscreteLaw::additive_example(0, false),
          DiscreteLaw::additive_example(1, false)};
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  BenchmarkConfig b;
  b.n = 5000;
  b.reps = 100;
  b.folds = 5;
  b.interval = {0.25, 0.75};
  b.anchor = 0.5;
  b.seed = 11;
  const auto r = run_benchmark(b);
  const auto& iv = r.cell(ScoreTag::aipw_iv);
  const auto& nuc = r.cell(ScoreTag::aipw_nuc);
  const bool ok = iv.interval_bias <= 0.02 && nuc.interval_bias >= 0.10 && nuc.interval_bias <= 0.25 &&
                  iv.interval_rmse <= 0.15;
  return {ok, "IV-AIPW bias " + fmt(iv.interval_bias) + " (<= 0.02), rmse " + fmt(iv.interval_rmse) +
                  " (<= 0.15); NUC-AIPW bias " + fmt(nuc.interval_bias) + " (in [0.10, 0.25]); failures " +
                  std::to_string(r.failures)};
}

Outcome criterion2() {
  BenchmarkConfig b;
  b.n = 5000;
  b.reps = 100;
  b.folds = 5;
  b.interval = {-0.75, -0.25};
  b.anchor = -0.5;
  b.points = {-0.6, -0.5, -0.4};
  b.seed = 12;
  const auto r = run_benchmark(b);
  const auto& iv = r.cell(ScoreTag::aipw_iv);
  double worst = 0.0;
  for (double v : iv.point_bias) worst = std::max(worst, std::abs(v));
  const double ratio = iv.interval_rmse / iv.point_rmse[1];
  const bool ok = worst <= 0.03 && ratio >= 1.5;
  return {ok, "max pointwise IV-AIPW bias " + fmt(worst) + " (<= 0.03); N-rmse / rmse(-0.5) = " +
                  fmt(iv.interval_rmse) + " / " + fmt(iv.point_rmse[1]) + " = " + fmt(ratio) + " (>= 1.5)"};
}

Outcome criterion3() {
  double worst = 0.0;
  std::set<std::string> families;
  std::size_t laws = 0;
  for (const auto& law : toy_laws()) {
    const auto pi = oracle::linear_pi(law, 0.25);
    if (oracle::relevant_a(law, pi).empty()) continue;
    ++laws;
    for (const auto& r : suite::identification(law, pi)) {
      if (r.checks == 0) continue;
      families.insert(r.score);
      worst = std::max(worst, r.max_error);
    }
  }
  const bool ok = laws >= 3 && families.size() == 5 && worst <= 1e-10;
  return {ok, std::to_string(laws) + " laws, " + std::to_string(families.size()) +
                  " score families (aipw, ipw, or, degenerate, multicat); max |E[phi|A=a] - theta(a)| = " +
                  fmt(worst, 3)};
}

Outcome criterion4() {
  double single = 0.0, worst_slope_dev = 0.0;
  std::string slopes;
  for (int v = 0; v < 3; ++v) {
    const auto law = DiscreteLaw::additive_example(v, true);
    const auto r = suite::mixed_bias(law, oracle::linear_pi(law, 0.25));
    single = std::max(single, r.single_max);
    for (const auto& [name, s] : r.pair_slopes) {
      worst_slope_dev = std::max(worst_slope_dev, std::abs(s - 2.0));
      if (v == 0) slopes += " (" + name + ") " + fmt(s, 3);
    }
  }
  return {single <= 1e-10 && worst_slope_dev <= 0.3,
          "single-component bias max " + fmt(single, 3) + " (<= 1e-10); pair slopes on law 0:" + slopes +
              "; max |slope - 2| over 3 laws " + fmt(worst_slope_dev, 3) + " (<= 0.3)"};
}

Outcome criterion5() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1), hu(0.1, 0.8);
  std::normal_distribution<double> e(0, 1);
  const KernelId ks[] = {KernelId::epanechnikov, KernelId::triangular, KernelId::uniform};
  double w1 = 0, w2 = 0, affine = 0, ne = 0;
  std::size_t configs = 0, small = 0;
  while (configs < 1000) {
    const std::size_t n = 5 + rng() % 300;
    std::vector<double> a(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = u(rng);
      s[i] = std::cos(3 * a[i]) + e(rng);
    }
    const double at = 0.9 * u(rng), h = hu(rng);
    const auto k = ks[configs % 3];
    LlkrFit f;
    try {
      f = LocalLinearSmoother(a, s, k).fit(at, h, true);
    } catch (const Error&) {
      continue;
    }
    ++configs;
    double sw = 0, swa = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sw += f.weights[i];
      swa += f.weights[i] * (a[i] - at);
    }
    w1 = std::max(w1, std::abs(sw - 1));
    w2 = std::max(w2, std::abs(swa));
    // Affine responses.
    const double c0 = 3 * u(rng), c1 = 3 * u(rng);
    std::vector<double> lin(n);
    for (std::size_t i = 0; i < n; ++i) lin[i] = c0 + c1 * a[i];
    affine = std::max(affine, std::abs(llkr_fit(a, lin, at, h, k).intercept - (c0 + c1 * at)));
    // Normal equations on small samples.
    if (n <= 50) {
      ++small;
      Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
      Eigen::Vector2d r = Eigen::Vector2d::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const double w = kernel_eval(k, (a[i] - at) / h);
        const Eigen::Vector2d x(1.0, a[i] - at);
        m += w * x * x.transpose();
        r += w * s[i] * x;
      }
      const Eigen::Vector2d beta = m.fullPivLu().solve(r);
      ne = std::max(ne, std::abs(beta[0] - f.intercept) / (1 + std::abs(beta[0])));
    }
  }
  const bool ok = w1 <= 1e-10 && w2 <= 1e-10 && affine <= 1e-9 && ne <= 1e-9 && small > 0;
  return {ok, std::to_string(configs) + " configs: max |sum w - 1| " + fmt(w1, 3) + ", max |sum w (A - a)| " +
                  fmt(w2, 3) + ", affine error " + fmt(affine, 3) + ", normal-equation error " + fmt(ne, 3) +
                  " on " + std::to_string(small) + " samples with n <= 50"};
}

Outcome criterion6() {
  const std::size_t reps = 200, n = 2000;
  const TargetInterval iv(0.25, 0.75);
  const auto pi = oracle_weighting({OracleWeighting::Kind::true_density, 0.5});
  std::vector<int> covered(reps, 0), failed(reps, 0);
  for (std::size_t r = 0; r < reps; ++r) {
    try {
      const auto d = simulate_dgp({n, derive_seed(6, 41, r), DgpVariant::paper_main});
      CrossfitConfig cfg;
      cfg.seed = derive_seed(6, 42, r);
      cfg.emp_cap = 300;
      cfg.nuisance_override = [](const Dataset&, std::size_t) {
        return std::make_shared<PaperDgpOracle>(OracleWeighting{OracleWeighting::Kind::true_density, 0.5});
      };
      const auto cf = crossfit_scores(d, pi, iv, cfg);
      DrfConfig dc;
      const std::span<const double> a(d.a().data(), d.size());
      const auto est = estimate_drf_llkr(cf.scores[0].values, a, iv, dc);
      const std::size_t mid = est.grid.size() / 2;
      covered[r] = est.ci_lo[mid] <= 0.5 && 0.5 <= est.ci_hi[mid];
    } catch (const Error&) {
      failed[r] = 1;
    }
  }
  double cov = 0, fails = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    cov += covered[r];
    fails += failed[r];
  }
  const double rate = cov / static_cast<double>(reps);
  return {rate >= 0.90 && rate <= 0.99 && fails == 0,
          "95% CI coverage of theta(0.5) = " + fmt(rate, 3) + " over " + std::to_string(reps) +
              " replications (in [0.90, 0.99]); failed replications " + fmt(fails, 3)};
}

Outcome criterion7() {
  std::ostringstream det;
  bool ok = true;
  double chi_err = 0.0;
  for (int v = 0; v < 3; ++v) {
    const auto law = DiscreteLaw::additive_example(v, true);
    const auto d = law.to_dataset(8192);
    RelevanceConfig rc;
    rc.neighbours = d.size();
    const auto curve = chi2_divergence_curve(d, law.a_values, quantile_l_grid(d), rc);
    for (std::size_t ai = 0; ai < law.a_values.size(); ++ai)
      for (std::size_t li = 0; li < 2; ++li)
        chi_err = std::max(chi_err, std::abs(curve.divergence[ai][li] - oracle::chi2(law, ai, li)));
  }
  ok = ok && chi_err <= 1e-10;
  det << "chi2 error " << fmt(chi_err, 3) << " (<= 1e-10)";

  const auto bin = simulate_dgp({5000, 71, DgpVariant::binary_iv_crossing});
  const auto map = kappa_sign_map(bin, WeightingFunction::coordinate(0, 1.0), TargetInterval(-0.9, 0.9).grid(37),
                                  quantile_l_grid(bin, 5));
  std::size_t crossing = 0;
  for (char c : map.l_has_crossing) crossing += c ? 1 : 0;
  ok = ok && crossing == map.l_has_crossing.size();
  det << "; binary-IV kappa crosses zero at " << crossing << "/" << map.l_has_crossing.size() << " l values";

  const auto d = simulate_dgp({5000, 72, DgpVariant::paper_main});
  const auto aux = simulate_dgp({10000, 73, DgpVariant::paper_main});
  const auto dens = make_density_rwf(aux, 0.5, {});
  const auto good = check_urwf(d, dens, {0.25, 0.75});
  const auto bad = check_urwf(d, WeightingFunction::coordinate(0, 3.0), {-1.0, 1.0});
  ok = ok && good.pass && !bad.pass;
  det << "; URWF density@0.5 on [0.25,0.75] " << (good.pass ? "pass" : "fail") << " (min |kappa| "
      << fmt(good.min_abs_kappa, 3) << " vs eps " << fmt(good.epsilon, 3) << "), pi=Z on [-1,1] "
      << (bad.pass ? "pass" : "fail");

  const auto cover = cover_interval(d, -0.75, 0.75);
  ok = ok && cover.members.size() >= 2 && cover.covers();
  det << "; cover of [-0.75,0.75] has " << cover.members.size() << " members";
  return {ok, det.str()};
}

Outcome criterion8() {
  double add_dev = 0.0;
  for (int v = 0; v < 3; ++v) {
    const auto law = DiscreteLaw::additive_example(v, true);
    const auto pi = oracle::linear_pi(law, 0.25);
    for (auto ai : oracle::relevant_a(law, pi))
      for (std::size_t ui = 0; ui < law.u_values.size(); ++ui)
        for (std::size_t li = 0; li < 2; ++li)
          add_dev = std::max(add_dev, std::abs(law.omega_index(ai, ui, li, pi) - 1.0));
    const auto d = law.to_dataset(8192);
    for (auto ai : oracle::relevant_a(law, pi))
      add_dev = std::max(add_dev, aiv_weight_check(d, law, law.weighting(pi), law.a_values[ai]).max_abs_dev);
  }
  const auto mul = DiscreteLaw::multiplicative_example();
  const auto mpi = oracle::linear_pi(mul);
  const auto md = mul.to_dataset(8192);
  double mul_dev = 0.0;
  bool detected = false;
  for (auto ai : oracle::relevant_a(mul, mpi)) {
    const auto r = aiv_weight_check(md, mul, mul.weighting(mpi), mul.a_values[ai]);
    detected = detected || r.violation;
    mul_dev = std::max(mul_dev, r.max_abs_dev);
  }
  return {add_dev <= 1e-10 && detected, "additive tables max |omega - 1| " + fmt(add_dev, 3) +
                                            " (<= 1e-10); multiplicative table max |omega - 1| " + fmt(mul_dev, 3) +
                                            (detected ? " detected" : " not detected")};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

/// Runs `args` with one worker, then replays its manifest with several and compares every output.
bool replay_matches(const std::string& cli, const fs::path& root, const std::string& name, const std::string& args,
                    std::string& why) {
  const auto a = root / (name + "_t1"), b = root / (name + "_t4");
  if (run(cli + " " + args + " --threads 1 --out " + a.string()) != 0) {
    why = name + ": first run failed";
    return false;
  }
  if (run(cli + " " + name.substr(0, name.find('_')) + " --config " + (a / "manifest.json").string() +
          " --threads 4 --out " + b.string()) != 0) {
    why = name + ": replay failed";
    return false;
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    const auto other = b / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      why = name + ": " + entry.path().filename().string() + " differs";
      return false;
    }
  }
  why = name + ": " + std::to_string(files) + " files identical";
  return files >= 2;
}

Outcome criterion9() {
  const std::string cli = IVDRF_CLI_PATH;
  const auto root = fs::temp_directory_path() / "ivdrf_acceptance_c9";
  fs::remove_all(root);
  fs::create_directories(root);
  std::vector<std::string> notes;
  bool ok = true;
  std::string why;
  ok = replay_matches(cli, root, "simulate", "simulate --n 1500 --seed 21", why) && ok;
  notes.push_back(why);
  const auto data = (root / "simulate_t1" / "data.csv").string();
  ok = replay_matches(cli, root, "estimate_crossfit",
                      "estimate --data " + data + " --seed 22 --frameworks iv,nuc --estimators aipw,ipw", why) &&
       ok;
  notes.push_back(why);
  ok = replay_matches(cli, root, "estimate_bootstrap", "estimate --data " + data + " --seed 23 --bootstrap 8", why) &&
       ok;
  notes.push_back(why);
  ok = replay_matches(cli, root, "benchmark", "benchmark --n 800 --reps 4 --seed 24 --aux-n 2000", why) && ok;
  notes.push_back(why);

  // Library level: serial and parallel execution give identical numbers.
  BenchmarkConfig bc;
  bc.n = 800;
  bc.reps = 3;
  bc.aux_n = 2000;
  bc.seed = 25;
  bc.policy = ExecPolicy::serial;
  const auto s = run_benchmark(bc);
  bc.policy = ExecPolicy::parallel;
  const auto p = run_benchmark(bc);
  const bool same = s.cell(ScoreTag::aipw_iv).grid_bias == p.cell(ScoreTag::aipw_iv).grid_bias &&
                    s.cell(ScoreTag::aipw_nuc).grid_rmse == p.cell(ScoreTag::aipw_nuc).grid_rmse;
  ok = ok && same;
  notes.push_back(std::string("serial vs parallel benchmark ") + (same ? "identical" : "differs"));
  std::string det;
  for (const auto& n : notes) det += (det.empty() ? "" : "; ") + n;
  return {ok, det};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}};
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!chosen.empty() && !chosen.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << " ["
              << fmt(secs, 3) << " s]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
