#include "ivdrf/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ivdrf/error.hpp"

namespace ivdrf {

SplineBasis1D SplineBasis1D::cubic(double lo, double hi, int size) {
  require(size >= 4, ErrorKind::invalid_argument, "cubic spline basis needs at least 4 functions");
  require(hi > lo, ErrorKind::invalid_argument, "spline range must have positive width");
  SplineBasis1D b;
  b.size_ = size;
  b.lo_ = lo;
  b.hi_ = hi;
  b.step_ = (hi - lo) / static_cast<double>(size - 3);
  return b;
}

SplineBasis1D SplineBasis1D::levels(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  require(!values.empty(), ErrorKind::invalid_argument, "level basis needs at least one value");
  SplineBasis1D b;
  b.discrete_ = true;
  b.levels_ = std::move(values);
  b.size_ = static_cast<int>(b.levels_.size());
  b.lo_ = b.levels_.front();
  b.hi_ = b.levels_.back();
  return b;
}

int SplineBasis1D::eval(double x, double* v) const {
  if (discrete_) {
    if (size_ == 1) {
      v[0] = 1.0;
      v[1] = 0.0;
      return 0;
    }
    if (x <= levels_.front()) {
      v[0] = 1.0;
      v[1] = 0.0;
      return 0;
    }
    if (x >= levels_.back()) {
      v[0] = 0.0;
      v[1] = 1.0;
      return size_ - 2;
    }
    const auto it = std::upper_bound(levels_.begin(), levels_.end(), x);
    const int j = static_cast<int>(it - levels_.begin()) - 1;
    const double t = (x - levels_[j]) / (levels_[j + 1] - levels_[j]);
    v[0] = 1.0 - t;
    v[1] = t;
    return j;
  }
  const double xc = std::clamp(x, lo_, hi_);
  const int intervals = size_ - 3;
  double pos = (xc - lo_) / step_;
  int k = static_cast<int>(std::floor(pos));
  if (k >= intervals) k = intervals - 1;
  if (k < 0) k = 0;
  const double u = pos - k;
  const double u2 = u * u, u3 = u2 * u;
  const double w = 1.0 - u;
  v[0] = w * w * w / 6.0;
  v[1] = (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0;
  v[2] = (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
  v[3] = u3 / 6.0;
  return k;
}

RowMatrix SplineBasis1D::penalty() const {
  RowMatrix p = RowMatrix::Zero(size_, size_);
  if (discrete_ || size_ < 3) return p;
  for (int r = 0; r + 2 < size_; ++r) {
    const int idx[3] = {r, r + 1, r + 2};
    const double d[3] = {1.0, -2.0, 1.0};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) p(idx[i], idx[j]) += d[i] * d[j];
  }
  return p;
}

RegressionMethod parse_regression_method(std::string_view name) {
  if (name == "spline" || name == "penalized_spline") return RegressionMethod::penalized_spline;
  if (name == "local_linear" || name == "kernel") return RegressionMethod::local_linear;
  fail(ErrorKind::invalid_argument, "unknown regression method '" + std::string(name) + "'");
}

namespace {

class NaivePanel final : public RegressionPanel {
 public:
  NaivePanel(const RegressionModel& model, RowMatrix tails) : model_(model), tails_(std::move(tails)) {}
  std::size_t size() const override { return static_cast<std::size_t>(tails_.rows()); }
  void eval(double a, double* out) const override {
    std::vector<double> x(static_cast<std::size_t>(tails_.cols()) + 1);
    x[0] = a;
    for (Eigen::Index j = 0; j < tails_.rows(); ++j) {
      for (Eigen::Index c = 0; c < tails_.cols(); ++c) x[static_cast<std::size_t>(c) + 1] = tails_(j, c);
      out[j] = model_.predict(x);
    }
  }

 private:
  const RegressionModel& model_;
  RowMatrix tails_;
};

}  // namespace

std::unique_ptr<RegressionPanel> RegressionModel::panel(const RowMatrix& tails) const {
  require(static_cast<std::size_t>(tails.cols()) + 1 == dim(), ErrorKind::invalid_argument,
          "panel rows must supply every coordinate except the first");
  return std::make_unique<NaivePanel>(*this, tails);
}

namespace {

class ConstantModel final : public RegressionModel {
 public:
  ConstantModel(double v, std::size_t d) : value_(v), dim_(d) {}
  std::size_t dim() const override { return dim_; }
  double predict(std::span<const double>) const override { return value_; }

 private:
  double value_;
  std::size_t dim_;
};

// Visits the nonzero tensor basis products of one point. `fn(index, value)`.
template <class Fn>
void for_tensor_terms(const std::vector<SplineBasis1D>& bases, const std::vector<int>& strides,
                      std::span<const double> x, std::size_t first_dim, Fn&& fn) {
  const std::size_t d = bases.size();
  double vals[8][4];
  int start[8];
  int ord[8];
  for (std::size_t k = first_dim; k < d; ++k) {
    start[k] = bases[k].eval(x[k], vals[k]);
    ord[k] = bases[k].order();
    if (bases[k].size() < ord[k]) ord[k] = bases[k].size();
  }
  int counter[8] = {0};
  while (true) {
    int idx = 0;
    double v = 1.0;
    for (std::size_t k = first_dim; k < d; ++k) {
      idx += (start[k] + counter[k]) * strides[k];
      v *= vals[k][counter[k]];
    }
    fn(idx, v);
    bool done = true;
    for (std::size_t k = d; k > first_dim;) {
      --k;
      if (++counter[k] < ord[k]) {
        done = false;
        break;
      }
      counter[k] = 0;
    }
    if (done) return;
  }
}

class TensorSpline final : public RegressionModel {
 public:
  TensorSpline(std::vector<SplineBasis1D> bases, Vector beta, double lambda)
      : bases_(std::move(bases)), beta_(std::move(beta)) {
    lambda_ = lambda;
    strides_.assign(bases_.size(), 1);
    for (std::size_t k = bases_.size(); k-- > 1;) strides_[k - 1] = strides_[k] * bases_[k].size();
  }

  std::size_t dim() const override { return bases_.size(); }

  double predict(std::span<const double> x) const override {
    double s = 0.0;
    for_tensor_terms(bases_, strides_, x, 0, [&](int idx, double v) { s += beta_[idx] * v; });
    return s;
  }

  std::unique_ptr<RegressionPanel> panel(const RowMatrix& tails) const override;

  const std::vector<SplineBasis1D>& bases() const { return bases_; }
  const std::vector<int>& strides() const { return strides_; }
  const Vector& beta() const { return beta_; }

 private:
  std::vector<SplineBasis1D> bases_;
  std::vector<int> strides_;
  Vector beta_;
};

class TensorPanel final : public RegressionPanel {
 public:
  TensorPanel(const TensorSpline& model, const RowMatrix& tails) : first_(model.bases()[0]) {
    const auto& bases = model.bases();
    const auto& strides = model.strides();
    const auto m = tails.rows();
    coef_ = Eigen::MatrixXd::Zero(m, first_.size());
    std::vector<double> x(bases.size(), 0.0);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (std::size_t c = 1; c < bases.size(); ++c) x[c] = tails(j, static_cast<Eigen::Index>(c - 1));
      for_tensor_terms(bases, strides, x, 1, [&](int idx, double v) {
        for (int p = 0; p < first_.size(); ++p) coef_(j, p) += v * model.beta()[p * strides[0] + idx];
      });
    }
  }

  std::size_t size() const override { return static_cast<std::size_t>(coef_.rows()); }

  void eval(double a, double* out) const override {
    double v[4];
    const int f = first_.eval(a, v);
    const int ord = std::min(first_.order(), first_.size());
    Eigen::Map<Eigen::VectorXd> o(out, coef_.rows());
    o = v[0] * coef_.col(f);
    for (int k = 1; k < ord; ++k) o += v[k] * coef_.col(f + k);
  }

 private:
  SplineBasis1D first_;
  Eigen::MatrixXd coef_;  // column-major: each basis column is contiguous over j
};

std::unique_ptr<RegressionPanel> TensorSpline::panel(const RowMatrix& tails) const {
  require(static_cast<std::size_t>(tails.cols()) + 1 == dim(), ErrorKind::invalid_argument,
          "panel rows must supply every coordinate except the first");
  return std::make_unique<TensorPanel>(*this, tails);
}

std::vector<SplineBasis1D> make_bases(const RowMatrix& x, const RegressionConfig& cfg) {
  const auto d = static_cast<std::size_t>(x.cols());
  require(d >= 1 && d <= 8, ErrorKind::invalid_argument, "spline regression supports 1 to 8 inputs");
  std::vector<SplineBasis1D> bases;
  std::vector<std::size_t> continuous;
  std::size_t discrete_product = 1;
  for (std::size_t k = 0; k < d; ++k) {
    std::set<double> distinct;
    for (Eigen::Index i = 0; i < x.rows() && distinct.size() <= cfg.discrete_threshold; ++i)
      distinct.insert(x(i, static_cast<Eigen::Index>(k)));
    if (distinct.size() <= cfg.discrete_threshold) {
      bases.push_back(SplineBasis1D::levels({distinct.begin(), distinct.end()}));
      discrete_product *= distinct.size();
    } else {
      bases.emplace_back();
      continuous.push_back(k);
    }
  }
  int df = std::max(4, cfg.spline_df);
  if (!continuous.empty()) {
    const double budget = static_cast<double>(cfg.max_params) / static_cast<double>(discrete_product);
    const int cap = static_cast<int>(std::floor(std::pow(std::max(budget, 1.0), 1.0 / continuous.size())));
    df = std::max(4, std::min(df, cap));
  }
  for (std::size_t k : continuous) {
    const auto col = x.col(static_cast<Eigen::Index>(k));
    bases[k] = SplineBasis1D::cubic(col.minCoeff(), col.maxCoeff(), df);
  }
  return bases;
}

std::vector<std::shared_ptr<const RegressionModel>> fit_spline(const RowMatrix& x,
                                                               const RowMatrix& y,
                                                               const RegressionConfig& cfg) {
  auto bases = make_bases(x, cfg);
  std::vector<int> strides(bases.size(), 1);
  for (std::size_t k = bases.size(); k-- > 1;) strides[k - 1] = strides[k] * bases[k].size();
  const int p = strides[0] * bases[0].size();
  const auto n = x.rows();
  require(n >= std::max<Eigen::Index>(10, 2 * p), ErrorKind::insufficient_support,
          "spline regression needs at least max(10, 2 x basis size) = " +
              std::to_string(std::max<Eigen::Index>(10, 2 * p)) + " rows, got " +
              std::to_string(n));
  const auto r = y.cols();

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(p, r);
  Eigen::VectorXd yty = Eigen::VectorXd::Zero(r);
  std::vector<int> idx;
  std::vector<double> val;
  for (Eigen::Index i = 0; i < n; ++i) {
    idx.clear();
    val.clear();
    std::span<const double> xi(x.data() + i * x.cols(), static_cast<std::size_t>(x.cols()));
    for_tensor_terms(bases, strides, xi, 0, [&](int j, double v) {
      idx.push_back(j);
      val.push_back(v);
    });
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = 0; b < idx.size(); ++b) gram(idx[a], idx[b]) += val[a] * val[b];
      for (Eigen::Index c = 0; c < r; ++c) xty(idx[a], c) += val[a] * y(i, c);
    }
    for (Eigen::Index c = 0; c < r; ++c) yty[c] += y(i, c) * y(i, c);
  }

  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t k = 0; k < bases.size(); ++k) {
    const RowMatrix pk = bases[k].penalty();
    if (pk.isZero(0.0)) continue;
    const int inner = strides[k];
    const int outer = p / (inner * bases[k].size());
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in)
        for (int s = 0; s < bases[k].size(); ++s)
          for (int t = 0; t < bases[k].size(); ++t) {
            const double v = pk(s, t);
            if (v == 0.0) continue;
            const int base = o * inner * bases[k].size() + in;
            pen(base + s * inner, base + t * inner) += v;
          }
  }

  const double maxdiag = gram.diagonal().maxCoeff();
  require(maxdiag > 0.0, ErrorKind::conditioning, "spline design has an all-zero Gram matrix");
  Eigen::MatrixXd reg = gram;
  reg.diagonal().array() += std::max(cfg.ridge, 1e-14) * maxdiag;
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  require(llt.info() == Eigen::Success, ErrorKind::conditioning,
          "penalized spline normal matrix is not positive definite after ridge");
  // Simultaneous diagonalization: reg = L L', L^-1 pen L^-T = U diag(ev) U'.
  const Eigen::MatrixXd lower = llt.matrixL();
  Eigen::MatrixXd m = lower.triangularView<Eigen::Lower>().solve(pen);
  m = lower.triangularView<Eigen::Lower>().solve(m.transpose()).transpose();
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  require(eig.info() == Eigen::Success, ErrorKind::conditioning, "penalty eigendecomposition failed");
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd& u = eig.eigenvectors();
  // beta(lambda) = L^-T U diag(1/(1+lambda ev)) U' L^-1 X'y
  const Eigen::MatrixXd proj = u.transpose() * lower.triangularView<Eigen::Lower>().solve(xty);
  const Eigen::MatrixXd back = lower.transpose().triangularView<Eigen::Upper>().solve(u);

  std::vector<double> lambdas;
  const double evmax = ev.maxCoeff();
  if (cfg.penalty >= 0.0 || evmax <= 0.0) {
    lambdas.push_back(std::max(cfg.penalty, 0.0));
  } else {
    for (int k = -8; k <= 16; ++k) lambdas.push_back(std::pow(10.0, 0.5 * k) / evmax);
  }

  std::vector<std::shared_ptr<const RegressionModel>> models;
  const double nn = static_cast<double>(n);
  for (Eigen::Index c = 0; c < r; ++c) {
    double best_score = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_beta;
    double best_lambda = lambdas.front();
    for (double lam : lambdas) {
      const Eigen::VectorXd shrink = (1.0 + lam * ev.array()).inverse().matrix();
      const Eigen::VectorXd beta = back * shrink.cwiseProduct(proj.col(c));
      const double rss = std::max(0.0, yty[c] - 2.0 * beta.dot(xty.col(c)) + beta.dot(gram * beta));
      const double edf = shrink.sum();
      double score = 0.0;
      if (lambdas.size() > 1) {
        if (nn - edf <= 1.0) continue;
        score = nn * rss / ((nn - edf) * (nn - edf));
      }
      if (score < best_score) {
        best_score = score;
        best_beta = beta;
        best_lambda = lam;
      }
    }
    require(best_beta.size() == p && best_beta.allFinite(), ErrorKind::conditioning,
            "penalized spline solve produced no finite coefficients");
    models.push_back(std::make_shared<TensorSpline>(bases, best_beta, best_lambda));
  }
  return models;
}

class LocalLinearModel final : public RegressionModel {
 public:
  LocalLinearModel(RowMatrix x, Vector y, std::vector<double> bw)
      : x_(std::move(x)), y_(std::move(y)), bw_(std::move(bw)) {}
  std::size_t dim() const override { return static_cast<std::size_t>(x_.cols()); }

  double predict(std::span<const double> q) const override {
    const auto d = x_.cols();
    Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(d + 1, d + 1);
    Eigen::VectorXd xtwy = Eigen::VectorXd::Zero(d + 1);
    Eigen::VectorXd g(d + 1);
    double wsum = 0.0, wy = 0.0;
    for (Eigen::Index i = 0; i < x_.rows(); ++i) {
      double e = 0.0;
      g[0] = 1.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = x_(i, k) - q[static_cast<std::size_t>(k)];
        const double t = diff / bw_[static_cast<std::size_t>(k)];
        e += t * t;
        g[k + 1] = diff;
      }
      const double w = std::exp(-0.5 * e);
      if (w < 1e-300) continue;
      xtwx.noalias() += w * g * g.transpose();
      xtwy += w * y_[i] * g;
      wsum += w;
      wy += w * y_[i];
    }
    require(wsum > 1e-300, ErrorKind::low_density, "local linear query outside covariate support");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() == Eigen::Success && ldlt.rcond() > 1e-12) {
      const Eigen::VectorXd b = ldlt.solve(xtwy);
      if (std::isfinite(b[0])) return b[0];
    }
    return wy / wsum;
  }

 private:
  RowMatrix x_;
  Vector y_;
  std::vector<double> bw_;
};

std::vector<std::shared_ptr<const RegressionModel>> fit_local_linear(const RowMatrix& x,
                                                                     const RowMatrix& y,
                                                                     const RegressionConfig& cfg) {
  const auto n = x.rows();
  const auto d = x.cols();
  require(n >= 10, ErrorKind::insufficient_support, "local linear regression needs at least 10 rows");
  std::vector<double> bw(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) {
    std::vector<double> tmp(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) tmp[static_cast<std::size_t>(i)] = x(i, k);
    double sd = sample_sd(tmp);
    if (sd <= 0.0) sd = 1.0;
    bw[static_cast<std::size_t>(k)] = cfg.bandwidth_multiplier * 1.06 * sd *
                                      std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
  }
  std::vector<std::shared_ptr<const RegressionModel>> models;
  for (Eigen::Index c = 0; c < y.cols(); ++c)
    models.push_back(std::make_shared<LocalLinearModel>(x, y.col(c), bw));
  return models;
}

}  // namespace

std::vector<std::shared_ptr<const RegressionModel>> fit_regression_multi(
    const RowMatrix& x, const RowMatrix& y, const RegressionConfig& config) {
  require(x.rows() == y.rows(), ErrorKind::invalid_argument, "regression X and Y row counts differ");
  require(x.rows() > 0, ErrorKind::empty_data, "regression has no rows");
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      require(std::isfinite(y(i, c)), ErrorKind::invalid_argument, "non-finite regression response");
  if (config.method == RegressionMethod::local_linear) return fit_local_linear(x, y, config);
  return fit_spline(x, y, config);
}

std::shared_ptr<const RegressionModel> fit_regression(const RowMatrix& x,
                                                      std::span<const double> y,
                                                      const RegressionConfig& config) {
  RowMatrix ym(static_cast<Eigen::Index>(y.size()), 1);
  for (std::size_t i = 0; i < y.size(); ++i) ym(static_cast<Eigen::Index>(i), 0) = y[i];
  return fit_regression_multi(x, ym, config).front();
}

std::shared_ptr<const RegressionModel> constant_model(double value, std::size_t dim) {
  return std::make_shared<ConstantModel>(value, dim);
}

}  // namespace ivdrf
