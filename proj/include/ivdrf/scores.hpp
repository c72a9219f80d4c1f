#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivdrf/core.hpp"
#include "ivdrf/exec.hpp"
#include "ivdrf/nuisance.hpp"

namespace ivdrf {

enum class ScoreTag { aipw_iv, ipw_iv, or_iv, aipw_nuc, ipw_nuc, or_nuc, degenerate_iv, multicat_iv };

ScoreTag parse_score_tag(std::string_view name);
std::string_view to_string(ScoreTag tag);
bool is_nuc(ScoreTag tag);

/// Empirical distribution of (Z_pi, L) over a set of rows. Weights sum to one;
/// they are uniform for a sample and equal to atom probabilities for an
/// enumerated law.
struct EmpiricalMeasure {
  std::vector<double> zpi;
  RowMatrix l;
  std::vector<double> weights;

  std::size_t size() const { return zpi.size(); }
  std::span<const double> l_row(std::size_t j) const {
    const auto d = static_cast<std::size_t>(l.cols());
    return {d ? l.data() + j * d : nullptr, d};
  }

  static EmpiricalMeasure from_rows(const Dataset& data, std::span<const double> zpi_all,
                                    std::span<const Index> rows);
  static EmpiricalMeasure weighted(std::vector<double> zpi, RowMatrix l, std::vector<double> weights);
  /// Keeps at most `cap` rows chosen by a seeded draw without replacement.
  EmpiricalMeasure capped(std::size_t cap, std::uint64_t seed) const;
};

struct ScoreVector {
  ScoreTag tag = ScoreTag::aipw_iv;
  std::string weighting_id;
  std::vector<double> values;
  std::vector<std::uint32_t> fold;
};

// Single-observation scores. `zpi` is pi(Z, L) of the observation.
double aipw_score(const Observation& o, double zpi, const NuisanceVector& alpha,
                  const EmpiricalMeasure& emp);
double ipw_score(const Observation& o, double zpi, const NuisanceVector& alpha);
double or_score(const Observation& o, const NuisanceVector& alpha, const EmpiricalMeasure& emp);

struct NucScores {
  double aipw = 0.0;
  double ipw = 0.0;
  double outcome_regression = 0.0;
};
NucScores nuc_scores(const Observation& o, const NuisanceVector& alpha, const EmpiricalMeasure& emp);

/// L must be empty; alpha supplies rho (constant), mu(A), kappa(A) and
/// lambda(A) = E[Y | A] through its eta component.
double degenerate_score(const Observation& o, double zpi, const NuisanceVector& alpha,
                        const EmpiricalMeasure& emp);

using PropensityFn = std::function<double(double a, std::span<const double> l)>;
/// Per-row value of the multi-categorical efficient score, without the -phi_a term.
double multicat_score(const Observation& o, double zpi, const NuisanceVector& alpha, double a_target,
                      const PropensityFn& delta, double floor = 1e-8);

/// Scores every row in `rows` for each tag, writing out[t][row]. The integral
/// terms over `emp` go through the nuisance panel (optimized path); with
/// `reference` set they use the single-observation functions above instead.
void score_rows(const Dataset& data, std::span<const double> zpi, std::span<const Index> rows,
                const NuisanceVector& alpha, const EmpiricalMeasure& emp,
                std::span<const ScoreTag> tags, std::vector<std::vector<double>>& out,
                ExecPolicy policy = ExecPolicy::parallel, bool reference = false);

/// Intervention weighting q with declared support [lo, hi].
struct InterventionQ {
  std::function<double(double)> fn;
  double lo = 0.0;
  double hi = 0.0;
};

/// mean_i q(A_i) phi_i. When `validated` is given, q's support must lie inside it.
double estimate_psi_q(std::span<const double> scores, std::span<const double> a, const InterventionQ& q,
                      std::optional<TargetInterval> validated = std::nullopt,
                      std::span<const double> weights = {});

}  // namespace ivdrf
