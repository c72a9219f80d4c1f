#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "ivdrf/core.hpp"
#include "ivdrf/density.hpp"
#include "ivdrf/regression.hpp"
#include "ivdrf/weighting.hpp"

namespace ivdrf {

/// Components of the nuisance vector that depend on (a, l).
struct NuisanceValues {
  double mu = 0.0;
  double kappa = 1.0;
  double eta = 0.0;
  double delta = 1.0;
};

/// mu, kappa, eta at (a, l_j) for a fixed list of l_j and any a.
class NuisancePanel {
 public:
  virtual ~NuisancePanel() = default;
  virtual std::size_t size() const = 0;
  virtual void eval(double a, double* mu, double* kappa, double* eta) const = 0;
};

/// The nuisance vector [mu, rho, kappa, eta, delta] evaluable at (a, l).
class NuisanceVector {
 public:
  virtual ~NuisanceVector() = default;
  virtual std::size_t l_dim() const = 0;
  virtual double rho(std::span<const double> l) const = 0;
  virtual NuisanceValues at(double a, std::span<const double> l) const = 0;
  /// Default implementation loops over at(); fitted models override it.
  virtual std::unique_ptr<NuisancePanel> panel(const RowMatrix& ls) const;
};

/// Nuisance vector assembled from caller-supplied functions (oracle injection,
/// perturbation studies).
class FunctionalNuisance final : public NuisanceVector {
 public:
  using RhoFn = std::function<double(std::span<const double>)>;
  using AtFn = std::function<NuisanceValues(double, std::span<const double>)>;
  FunctionalNuisance(std::size_t l_dim, RhoFn rho, AtFn at)
      : l_dim_(l_dim), rho_(std::move(rho)), at_(std::move(at)) {}
  std::size_t l_dim() const override { return l_dim_; }
  double rho(std::span<const double> l) const override { return rho_(l); }
  NuisanceValues at(double a, std::span<const double> l) const override { return at_(a, l); }

 private:
  std::size_t l_dim_;
  RhoFn rho_;
  AtFn at_;
};

struct NuisanceConfig {
  RegressionConfig regression;
  DensityConfig density;
  /// kappa floor = kappa_floor_scale x sd(Z_pi) unless kappa_floor is set.
  double kappa_floor_scale = 0.01;
  std::optional<double> kappa_floor;
  double delta_cap = 20.0;
  double density_floor = 1e-4;
};

struct ClipCounts {
  std::size_t kappa_clipped = 0;  // queries with a inside the target interval
  std::size_t kappa_clipped_total = 0;
  std::size_t delta_capped = 0;
  std::size_t delta_fallback = 0;
};

/// Nuisances trained by regression and kernel density estimation.
class FittedNuisance final : public NuisanceVector {
 public:
  struct Parts {
    std::shared_ptr<const RegressionModel> eta;    // E[Y | A, L]
    std::shared_ptr<const RegressionModel> m_yz;   // E[Y Z_pi | A, L]
    std::shared_ptr<const RegressionModel> m_z;    // E[Z_pi | A, L]
    std::shared_ptr<const RegressionModel> rho;    // E[Z_pi | L]; null when L is empty
    double rho_constant = 0.0;
    std::shared_ptr<const CondDensityModel> p_a;   // marginal density of A
    std::shared_ptr<const CondDensityModel> p_al;  // density of A given L; null when L is empty
  };

  FittedNuisance(Parts parts, std::size_t l_dim, double kappa_floor, double delta_cap,
                 double density_floor, TargetInterval interval);

  std::size_t l_dim() const override { return l_dim_; }
  double rho(std::span<const double> l) const override;
  NuisanceValues at(double a, std::span<const double> l) const override;
  std::unique_ptr<NuisancePanel> panel(const RowMatrix& ls) const override;

  double kappa_floor() const { return kappa_floor_; }
  double delta_cap() const { return delta_cap_; }
  ClipCounts clip_counts() const;
  /// Raw (unclipped) kappa, for diagnostics.
  double raw_kappa(double a, std::span<const double> l) const;
  double delta(double a, std::span<const double> l) const;
  const Parts& parts() const { return parts_; }

  /// Applies the floor with sign preservation and counts the event.
  double clip_kappa(double a, double k) const;

 private:
  Parts parts_;
  std::size_t l_dim_;
  double kappa_floor_;
  double delta_cap_;
  double density_floor_;
  TargetInterval interval_;
  mutable std::atomic<std::size_t> kappa_in_ {0}, kappa_all_ {0}, delta_cap_n_ {0}, delta_fb_ {0};
};

/// Trains [eta, m_YZ, m_Z, rho] and the densities behind delta on `train`.
/// Errors are reported as nuisance_training naming the failing component.
std::shared_ptr<const FittedNuisance> train_nuisance(const Dataset& train, const WeightingFunction& pi,
                                                     const TargetInterval& interval,
                                                     const NuisanceConfig& config);

/// Variant with pre-evaluated Z_pi values for the training rows.
std::shared_ptr<const FittedNuisance> train_nuisance(const Dataset& train, std::span<const double> zpi,
                                                     const TargetInterval& interval,
                                                     const NuisanceConfig& config);

/// Design matrices used by the nuisance regressions.
RowMatrix design_al(const Dataset& d);

}  // namespace ivdrf
