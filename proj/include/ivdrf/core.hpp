#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ivdrf {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = std::size_t;

/// One observed row O = [L, Z, A, Y]. Views into a Dataset; l may be empty.
struct Observation {
  std::span<const double> l;
  std::span<const double> z;
  double a = 0.0;
  double y = 0.0;
};

struct Support {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double a) const { return a >= lo && a <= hi; }
};

/// Target interval of treatment values over which one weighting function is
/// meant to be uniformly valid.
struct TargetInterval {
  double lo = 0.0;
  double hi = 0.0;

  TargetInterval() = default;
  TargetInterval(double lo, double hi);

  bool contains(double a) const { return a >= lo && a <= hi; }
  double width() const { return hi - lo; }
  /// Throws invalid_argument unless support.lo < lo < hi < support.hi.
  void require_interior(const Support& support) const;
  /// Equally spaced points including both endpoints.
  std::vector<double> grid(std::size_t points) const;
};

/// Columnar store of observations. Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  Dataset(RowMatrix l, RowMatrix z, Vector a, Vector y,
          std::optional<RowMatrix> latent_u = std::nullopt,
          std::optional<Support> support = std::nullopt);

  std::size_t size() const { return static_cast<std::size_t>(a_.size()); }
  std::size_t l_dim() const { return static_cast<std::size_t>(l_.cols()); }
  std::size_t z_dim() const { return static_cast<std::size_t>(z_.cols()); }

  Observation operator[](std::size_t i) const;
  std::span<const double> l_row(std::size_t i) const;
  std::span<const double> z_row(std::size_t i) const;

  const RowMatrix& l() const { return l_; }
  const RowMatrix& z() const { return z_; }
  const Vector& a() const { return a_; }
  const Vector& y() const { return y_; }
  const std::optional<RowMatrix>& latent_u() const { return u_; }
  const Support& treatment_support() const { return support_; }

  std::vector<std::string> l_names;
  std::vector<std::string> z_names;
  std::vector<std::string> u_names;

  /// Rows in the given order (duplicates allowed, e.g. bootstrap draws).
  Dataset subset(std::span<const Index> rows) const;
  Dataset with_support(Support support) const;

 private:
  RowMatrix l_;
  RowMatrix z_;
  Vector a_;
  Vector y_;
  std::optional<RowMatrix> u_;
  Support support_;
};

/// Column mapping for CSV ingestion.
struct Schema {
  std::string treatment = "a";
  std::string outcome = "y";
  std::vector<std::string> covariates;
  std::vector<std::string> instruments;
  std::vector<std::string> latent;
};

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);
/// Writes l..., z..., a, y columns (latent columns too when requested) with
/// shortest round-trip decimal text.
void write_dataset(const Dataset& data, const std::filesystem::path& path,
                   bool include_latent = false);
void write_latent(const Dataset& data, const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

struct FoldPlan {
  std::size_t n = 0;
  std::size_t folds = 0;
  double subsplit_fraction = 0.5;
  std::uint64_t seed = 0;
  /// fold_of[i] in [0, folds)
  std::vector<std::uint32_t> fold_of;
  /// subsplit[k][i] is 1 or 2 for i outside fold k and 0 for i in fold k.
  std::vector<std::vector<std::uint8_t>> subsplit;
  /// Nested plans only: inner_fold_of[i] in [0, inner_folds).
  std::size_t inner_folds = 0;
  std::vector<std::uint32_t> inner_fold_of;

  std::vector<Index> fold_rows(std::size_t k) const;
  std::vector<Index> complement_rows(std::size_t k) const;
  std::vector<Index> subsplit_rows(std::size_t k, int part) const;
  std::vector<Index> inner_rows(std::size_t k, std::size_t j) const;
  /// I_{k,-j}: rows of fold k outside inner fold j.
  std::vector<Index> inner_complement_rows(std::size_t k, std::size_t j) const;
};

/// Seeded shuffle then contiguous blocks; fold sizes differ by at most one.
FoldPlan make_folds(std::size_t n, std::size_t folds, double subsplit_fraction,
                    std::uint64_t seed);
/// Adds J inner folds inside every outer fold (nested cross-fitting).
FoldPlan make_nested_folds(std::size_t n, std::size_t folds, std::size_t inner_folds,
                           std::uint64_t seed);

double mean(std::span<const double> x);
double sample_sd(std::span<const double> x);
/// Linear-interpolation sample quantile (type 7), p in [0, 1].
double quantile(std::span<const double> x, double p);
std::span<const double> as_span(const Vector& v);

}  // namespace ivdrf
