#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/crossfit.hpp"
#include "ivdrf/diagnostics.hpp"
#include "ivdrf/drf.hpp"
#include "ivdrf/exec.hpp"
#include "ivdrf/nuisance.hpp"
#include "ivdrf/scores.hpp"
#include "ivdrf/weighting.hpp"

namespace ivdrf {

enum class DgpVariant { paper_main, binary_iv_crossing, unconfounded, discrete_toy };
DgpVariant parse_dgp_variant(std::string_view name);
std::string_view to_string(DgpVariant v);

struct DgpSpec {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  DgpVariant variant = DgpVariant::paper_main;
};

/// Simulated sample with the latent confounder stored in latent_u. Treatment
/// support is the known closed set [-1, 1].
Dataset simulate_dgp(const DgpSpec& spec);
/// True dose-response function of a continuous variant (theta(a) = a for all of them).
double true_drf(DgpVariant variant, double a);

// ---------------------------------------------------------------------------
// Closed-form quantities of the main simulation design.

namespace paper_dgp {
/// Density of A given L = l.
double p_a_given_l(double a, double l);
/// Marginal density of A.
double p_a(double a);
/// Density of A given Z = z (L enters only through Z).
double p_a_given_z(double a, double z);
/// Density of A given (Z, U).
double p_a_given_zu(double a, double z, double u);
}  // namespace paper_dgp

/// Which weighting function the closed-form oracle is built for.
struct OracleWeighting {
  enum class Kind { instrument, true_density } kind = Kind::true_density;
  double anchor = 0.5;
};

/// Exact nuisance vector of the main design (confounded or unconfounded).
class PaperDgpOracle final : public NuisanceVector {
 public:
  PaperDgpOracle(OracleWeighting w, bool confounded = true) : w_(w), confounded_(confounded) {}
  std::size_t l_dim() const override { return 1; }
  double rho(std::span<const double> l) const override;
  NuisanceValues at(double a, std::span<const double> l) const override;
  /// E[pi(Z) | A = a, L = l] - E[pi(Z) | L = l].
  double kappa(double a, double l) const;

 private:
  OracleWeighting w_;
  bool confounded_;
};

/// The weighting function matching an oracle (Z itself or the true density at the anchor).
WeightingFunction oracle_weighting(const OracleWeighting& w);

/// omega for the main design by quadrature over Z given L.
class PaperLatentModel final : public LatentTreatmentModel {
 public:
  double omega(double a, std::span<const double> u, std::span<const double> l,
               const WeightingFunction& pi) const override;
};

// ---------------------------------------------------------------------------
// Finite-support laws for brute-force oracles.

/// Joint law of (L, U, Z, A) on finite supports with Z independent of U given L
/// and Y = y(a, u, l) deterministic. L may be absent (empty l_values).
class DiscreteLaw : public LatentTreatmentModel {
 public:
  std::vector<double> l_values;  // empty means no covariate
  std::vector<double> l_probs;
  std::vector<double> u_values;
  std::vector<std::vector<double>> u_given_l;  // [l][u]
  std::vector<double> z_values;
  std::vector<std::vector<double>> z_given_l;  // [l][z]
  std::vector<double> a_values;
  std::vector<std::vector<std::vector<std::vector<double>>>> a_given;  // [l][z][u][a]
  std::vector<std::vector<std::vector<double>>> y_table;              // [l][u][a]

  struct Atom {
    std::size_t li = 0, ui = 0, zi = 0, ai = 0;
    double p = 0.0;
  };

  /// Throws invalid_argument unless every table is a probability vector within 1e-12.
  void validate() const;
  std::size_t n_l() const { return l_values.empty() ? 1 : l_values.size(); }
  bool has_l() const { return !l_values.empty(); }
  std::vector<Atom> atoms() const;
  double y(std::size_t li, std::size_t ui, std::size_t ai) const { return y_table[li][ui][ai]; }
  std::vector<double> l_of(std::size_t li) const;

  std::size_t a_index(double a) const;
  std::size_t l_index(std::span<const double> l) const;

  double prob_l(std::size_t li) const;
  double prob_a(std::size_t ai) const;
  double prob_a_given_l(std::size_t ai, std::size_t li) const;
  double prob_a_given_zl(std::size_t ai, std::size_t zi, std::size_t li) const;
  double prob_a_given_ul(std::size_t ai, std::size_t ui, std::size_t li) const;
  double theta(std::size_t ai) const;

  /// pi as a table over (z, l) indices.
  using PiTable = std::vector<std::vector<double>>;  // [z][l]
  WeightingFunction weighting(const PiTable& pi, std::string id = "table") const;
  /// Exact nuisance vector for the given weighting table.
  std::shared_ptr<FunctionalNuisance> exact_nuisance(const PiTable& pi) const;
  /// chi-square divergence of Z | A = a, L = l from Z | L = l.
  double chi2(std::size_t ai, std::size_t li) const;
  double omega_index(std::size_t ai, std::size_t ui, std::size_t li, const PiTable& pi) const;
  double omega(double a, std::span<const double> u, std::span<const double> l,
               const WeightingFunction& pi) const override;

  /// Each atom repeated round(p * scale) times; requires p * scale to be integral within 1e-6.
  Dataset to_dataset(std::size_t scale) const;
  /// Population (Z_pi, L) measure weighted by atom probabilities.
  EmpiricalMeasure population_measure(const PiTable& pi) const;

  /// p(a|z,u,l) = 0.5 q1(a|u,l) + 0.5 q2(a|z,l): AIV holds.
  static DiscreteLaw additive_example(int variant = 0, bool with_l = true);
  /// p(a|z,u,l) depends on z * u: AIV fails.
  static DiscreteLaw multiplicative_example();
  /// Every table uniform and y constant in a.
  static DiscreteLaw uniform_example();
};

/// n i.i.d. draws from an enumerated law (latent U kept).
Dataset sample_law(const DiscreteLaw& law, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Benchmark harness.

struct BenchmarkConfig {
  std::size_t n = 2000;
  std::size_t reps = 100;
  std::size_t folds = 5;
  TargetInterval interval{0.25, 0.75};
  std::optional<double> anchor;        // density anchor; default interval midpoint
  std::vector<double> points;          // default midpoint and midpoint +- 0.1
  std::vector<ScoreTag> tags{ScoreTag::aipw_iv, ScoreTag::aipw_nuc};
  std::uint64_t seed = 0;
  std::size_t aux_n = 10000;           // auxiliary sample used to fit pi
  DgpVariant variant = DgpVariant::paper_main;
  NuisanceConfig nuisance;
  DrfConfig drf;
  std::size_t emp_cap = 0;
  ExecPolicy policy = ExecPolicy::parallel;
};

struct BenchmarkCell {
  ScoreTag tag = ScoreTag::aipw_iv;
  std::vector<double> point_bias;  // per config point
  std::vector<double> point_rmse;
  double interval_bias = 0.0;
  double interval_rmse = 0.0;
  std::vector<double> grid_bias;   // per DRF grid point
  std::vector<double> grid_rmse;
  double mean_h = 0.0;
};

struct BenchmarkReport {
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t failures = 0;
  TargetInterval interval;
  double anchor = 0.0;
  std::vector<double> points;
  std::vector<double> grid;
  std::vector<double> weights;  // normalized p_A quadrature weights over the grid
  std::vector<BenchmarkCell> cells;
  std::vector<std::string> failure_messages;
  std::uint64_t seed = 0;

  const BenchmarkCell& cell(ScoreTag tag) const;
};

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

}  // namespace ivdrf
