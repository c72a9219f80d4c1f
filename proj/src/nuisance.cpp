#include "ivdrf/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ivdrf/error.hpp"

namespace ivdrf {

namespace {

class LoopPanel final : public NuisancePanel {
 public:
  LoopPanel(const NuisanceVector& nv, RowMatrix ls) : nv_(nv), ls_(std::move(ls)) {}
  std::size_t size() const override { return static_cast<std::size_t>(ls_.rows()); }
  void eval(double a, double* mu, double* kappa, double* eta) const override {
    const auto d = static_cast<std::size_t>(ls_.cols());
    for (Eigen::Index j = 0; j < ls_.rows(); ++j) {
      std::span<const double> l(d ? ls_.data() + j * ls_.cols() : nullptr, d);
      const auto v = nv_.at(a, l);
      mu[j] = v.mu;
      kappa[j] = v.kappa;
      eta[j] = v.eta;
    }
  }

 private:
  const NuisanceVector& nv_;
  RowMatrix ls_;
};

}  // namespace

std::unique_ptr<NuisancePanel> NuisanceVector::panel(const RowMatrix& ls) const {
  require(static_cast<std::size_t>(ls.cols()) == l_dim(), ErrorKind::invalid_argument,
          "panel covariate dimension mismatch");
  return std::make_unique<LoopPanel>(*this, ls);
}

FittedNuisance::FittedNuisance(Parts parts, std::size_t l_dim, double kappa_floor,
                               double delta_cap, double density_floor, TargetInterval interval)
    : parts_(std::move(parts)),
      l_dim_(l_dim),
      kappa_floor_(kappa_floor),
      delta_cap_(delta_cap),
      density_floor_(density_floor),
      interval_(interval) {}

double FittedNuisance::rho(std::span<const double> l) const {
  return parts_.rho ? parts_.rho->predict(l) : parts_.rho_constant;
}

double FittedNuisance::clip_kappa(double a, double k) const {
  if (std::abs(k) >= kappa_floor_) return k;
  kappa_all_.fetch_add(1, std::memory_order_relaxed);
  if (interval_.contains(a)) kappa_in_.fetch_add(1, std::memory_order_relaxed);
  return k < 0.0 ? -kappa_floor_ : kappa_floor_;
}

double FittedNuisance::raw_kappa(double a, std::span<const double> l) const {
  double x[16];
  x[0] = a;
  std::copy(l.begin(), l.end(), x + 1);
  return parts_.m_z->predict({x, l.size() + 1}) - rho(l);
}

double FittedNuisance::delta(double a, std::span<const double> l) const {
  if (!parts_.p_al) return 1.0;
  const double num = parts_.p_a->try_density(a, {}).value_or(0.0);
  const auto den = parts_.p_al->try_density(a, l);
  if (!den) {
    delta_fb_.fetch_add(1, std::memory_order_relaxed);
    return 1.0;
  }
  double d = num / std::max(*den, density_floor_);
  if (d > delta_cap_) {
    delta_cap_n_.fetch_add(1, std::memory_order_relaxed);
    d = delta_cap_;
  }
  return std::max(d, 1.0 / delta_cap_);
}

NuisanceValues FittedNuisance::at(double a, std::span<const double> l) const {
  require(l.size() == l_dim_, ErrorKind::invalid_argument, "nuisance query has wrong covariate dimension");
  double x[16];
  x[0] = a;
  std::copy(l.begin(), l.end(), x + 1);
  const std::span<const double> q(x, l.size() + 1);
  NuisanceValues v;
  const double r = rho(l);
  v.eta = parts_.eta->predict(q);
  v.kappa = clip_kappa(a, parts_.m_z->predict(q) - r);
  v.mu = (parts_.m_yz->predict(q) - v.eta * r) / v.kappa;
  v.delta = delta(a, l);
  return v;
}

namespace {

class FittedPanel final : public NuisancePanel {
 public:
  FittedPanel(const FittedNuisance& nv, const RowMatrix& ls) : nv_(nv) {
    const auto& p = nv.parts();
    eta_ = p.eta->panel(ls);
    myz_ = p.m_yz->panel(ls);
    mz_ = p.m_z->panel(ls);
    rho_.resize(static_cast<std::size_t>(ls.rows()));
    const auto d = static_cast<std::size_t>(ls.cols());
    for (Eigen::Index j = 0; j < ls.rows(); ++j)
      rho_[static_cast<std::size_t>(j)] = nv.rho({d ? ls.data() + j * ls.cols() : nullptr, d});
  }
  std::size_t size() const override { return rho_.size(); }
  void eval(double a, double* mu, double* kappa, double* eta) const override {
    const std::size_t m = rho_.size();
    eta_->eval(a, eta);
    myz_->eval(a, mu);
    mz_->eval(a, kappa);
    const double floor = nv_.kappa_floor();
    for (std::size_t j = 0; j < m; ++j) {
      double k = kappa[j] - rho_[j];
      if (std::abs(k) < floor) k = nv_.clip_kappa(a, k);
      kappa[j] = k;
      mu[j] = (mu[j] - eta[j] * rho_[j]) / k;
    }
  }

 private:
  const FittedNuisance& nv_;
  std::unique_ptr<RegressionPanel> eta_, myz_, mz_;
  std::vector<double> rho_;
};

}  // namespace

std::unique_ptr<NuisancePanel> FittedNuisance::panel(const RowMatrix& ls) const {
  require(static_cast<std::size_t>(ls.cols()) == l_dim_, ErrorKind::invalid_argument,
          "panel covariate dimension mismatch");
  return std::make_unique<FittedPanel>(*this, ls);
}

ClipCounts FittedNuisance::clip_counts() const {
  return {kappa_in_.load(), kappa_all_.load(), delta_cap_n_.load(), delta_fb_.load()};
}

RowMatrix design_al(const Dataset& d) {
  RowMatrix x(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.l_dim() + 1));
  x.col(0) = d.a();
  if (d.l_dim() > 0) x.rightCols(static_cast<Eigen::Index>(d.l_dim())) = d.l();
  return x;
}

std::shared_ptr<const FittedNuisance> train_nuisance(const Dataset& train, const WeightingFunction& pi,
                                                     const TargetInterval& interval,
                                                     const NuisanceConfig& config) {
  const auto zpi = pi.evaluate(train);
  return train_nuisance(train, zpi, interval, config);
}

std::shared_ptr<const FittedNuisance> train_nuisance(const Dataset& train, std::span<const double> zpi,
                                                     const TargetInterval& interval,
                                                     const NuisanceConfig& config) {
  require(train.size() > 0, ErrorKind::empty_data, "nuisance training set is empty");
  require(zpi.size() == train.size(), ErrorKind::invalid_argument, "Z_pi length mismatch");
  require(train.l_dim() <= 8, ErrorKind::invalid_argument, "at most 8 covariates are supported");
  const auto n = static_cast<Eigen::Index>(train.size());

  auto stage = [](const char* component, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      fail(ErrorKind::nuisance_training, std::string(component) + ": " + e.what());
    }
  };

  FittedNuisance::Parts parts;
  const RowMatrix x_al = design_al(train);
  RowMatrix ys(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = zpi[static_cast<std::size_t>(i)];
    ys(i, 0) = train.y()[i];
    ys(i, 1) = train.y()[i] * z;
    ys(i, 2) = z;
  }
  auto models = stage("eta/m_yz/m_z regressions", [&] { return fit_regression_multi(x_al, ys, config.regression); });
  parts.eta = models[0];
  parts.m_yz = models[1];
  parts.m_z = models[2];

  const std::vector<double> a(train.a().data(), train.a().data() + train.size());
  parts.p_a = stage("p_A density", [&] {
    return std::make_shared<const CondDensityModel>(
        CondDensityModel::fit(a, RowMatrix(n, 0), config.density, train.treatment_support()));
  });
  if (train.l_dim() == 0) {
    parts.rho_constant = mean(zpi);
  } else {
    parts.rho = stage("rho regression", [&] { return fit_regression(train.l(), zpi, config.regression); });
    parts.p_al = stage("p_A|L density", [&] {
      return std::make_shared<const CondDensityModel>(
          CondDensityModel::fit(a, train.l(), config.density, train.treatment_support()));
    });
  }
  double floor = config.kappa_floor.value_or(config.kappa_floor_scale * sample_sd(zpi));
  if (!(floor > 0.0)) floor = 1e-12;
  return std::make_shared<const FittedNuisance>(std::move(parts), train.l_dim(), floor,
                                                config.delta_cap, config.density_floor, interval);
}

}  // namespace ivdrf
