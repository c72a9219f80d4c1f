#include "ivdrf/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "ivdrf/error.hpp"
#include "ivdrf/rng.hpp"

namespace ivdrf {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::empty_data: return "empty_data";
    case ErrorKind::invalid_plan: return "invalid_plan";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::insufficient_support: return "insufficient_support";
    case ErrorKind::rank_deficiency: return "rank_deficiency";
    case ErrorKind::bandwidth_selection: return "bandwidth_selection";
    case ErrorKind::conditioning: return "conditioning";
    case ErrorKind::low_density: return "low_density";
    case ErrorKind::nuisance_training: return "nuisance_training";
    case ErrorKind::fold: return "fold";
    case ErrorKind::misuse: return "misuse";
    case ErrorKind::propensity: return "propensity";
    case ErrorKind::coverage_gap: return "coverage_gap";
    case ErrorKind::refused: return "refused";
    case ErrorKind::bootstrap: return "bootstrap";
    case ErrorKind::benchmark: return "benchmark";
    case ErrorKind::unavailable: return "unavailable";
    case ErrorKind::io: return "io";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

TargetInterval::TargetInterval(double lo_, double hi_) : lo(lo_), hi(hi_) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, ErrorKind::invalid_argument,
          "target interval requires finite lo <= hi");
}

void TargetInterval::require_interior(const Support& support) const {
  require(support.lo < lo && lo < hi && hi < support.hi, ErrorKind::invalid_argument,
          "target interval [" + format_double(lo) + ", " + format_double(hi) +
              "] must lie strictly inside the treatment support [" +
              format_double(support.lo) + ", " + format_double(support.hi) + "]");
}

std::vector<double> TargetInterval::grid(std::size_t points) const {
  require(points >= 2 || (points == 1 && lo == hi), ErrorKind::invalid_argument,
          "grid needs at least two points");
  std::vector<double> g(points);
  if (points == 1) {
    g[0] = lo;
    return g;
  }
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo + step * static_cast<double>(i);
  g.back() = hi;
  return g;
}

namespace {

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      require(std::isfinite(m(i, j)), ErrorKind::invalid_argument,
              std::string("non-finite value in ") + what + " at row " + std::to_string(i));
}

std::vector<std::string> default_names(const char* stem, std::size_t d) {
  std::vector<std::string> names;
  if (d == 1) return {stem};
  for (std::size_t j = 0; j < d; ++j) names.push_back(stem + std::to_string(j + 1));
  return names;
}

}  // namespace

Dataset::Dataset(RowMatrix l, RowMatrix z, Vector a, Vector y,
                 std::optional<RowMatrix> latent_u, std::optional<Support> support)
    : l_(std::move(l)), z_(std::move(z)), a_(std::move(a)), y_(std::move(y)),
      u_(std::move(latent_u)) {
  const auto n = a_.size();
  require(n > 0, ErrorKind::empty_data, "dataset has zero rows");
  require(y_.size() == n && l_.rows() == n && z_.rows() == n, ErrorKind::invalid_argument,
          "dataset columns have inconsistent lengths");
  if (l_.cols() == 0) l_.resize(n, 0);
  require_finite(l_, "covariates");
  require_finite(z_, "instruments");
  require_finite(a_, "treatment");
  require_finite(y_, "outcome");
  if (u_) {
    require(u_->rows() == n, ErrorKind::invalid_argument,
            "latent_u must have one row per observation");
  }
  const double amin = a_.minCoeff();
  const double amax = a_.maxCoeff();
  if (support) {
    require(support->lo <= amin && amax <= support->hi, ErrorKind::invalid_argument,
            "treatment values fall outside the declared support");
    support_ = *support;
  } else {
    support_ = {amin, amax};
  }
  l_names = default_names("l", l_dim());
  z_names = default_names("z", z_dim());
  if (u_) u_names = default_names("u", static_cast<std::size_t>(u_->cols()));
}

Observation Dataset::operator[](std::size_t i) const {
  return {l_row(i), z_row(i), a_[static_cast<Eigen::Index>(i)],
          y_[static_cast<Eigen::Index>(i)]};
}

std::span<const double> Dataset::l_row(std::size_t i) const {
  if (l_.cols() == 0) return {};
  return {l_.data() + i * static_cast<std::size_t>(l_.cols()),
          static_cast<std::size_t>(l_.cols())};
}

std::span<const double> Dataset::z_row(std::size_t i) const {
  if (z_.cols() == 0) return {};
  return {z_.data() + i * static_cast<std::size_t>(z_.cols()),
          static_cast<std::size_t>(z_.cols())};
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  RowMatrix l(m, l_.cols()), z(m, z_.cols());
  Vector a(m), y(m);
  std::optional<RowMatrix> u;
  if (u_) u = RowMatrix(m, u_->cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    l.row(r) = l_.row(i);
    z.row(r) = z_.row(i);
    a[r] = a_[i];
    y[r] = y_[i];
    if (u) u->row(r) = u_->row(i);
  }
  Dataset out(std::move(l), std::move(z), std::move(a), std::move(y), std::move(u), support_);
  out.l_names = l_names;
  out.z_names = z_names;
  out.u_names = u_names;
  return out;
}

Dataset Dataset::with_support(Support support) const {
  Dataset out = *this;
  require(support.lo <= a_.minCoeff() && a_.maxCoeff() <= support.hi,
          ErrorKind::invalid_argument, "treatment values fall outside the declared support");
  out.support_ = support;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_number(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::empty_data,
          path.string() + " has no header row");
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;

  auto lookup = [&](const std::string& name) {
    auto it = col.find(name);
    require(it != col.end(), ErrorKind::schema,
            "column '" + name + "' not found in " + path.string());
    return it->second;
  };
  require(!schema.instruments.empty(), ErrorKind::schema,
          "schema must name at least one instrument column");
  const std::size_t a_col = lookup(schema.treatment);
  const std::size_t y_col = lookup(schema.outcome);
  std::vector<std::size_t> l_cols, z_cols, u_cols;
  for (const auto& c : schema.covariates) l_cols.push_back(lookup(c));
  for (const auto& c : schema.instruments) z_cols.push_back(lookup(c));
  for (const auto& c : schema.latent) u_cols.push_back(lookup(c));

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::parse,
            "row " + std::to_string(rows.size() + 1) + " (line " + std::to_string(line_no) +
                ") has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(header.size()));
    std::vector<double> values(cells.size(), 0.0);
    auto parse_col = [&](std::size_t j) {
      require(parse_number(cells[j], values[j]), ErrorKind::parse,
              "non-numeric value '" + cells[j] + "' in column '" + header[j] + "' at row " +
                  std::to_string(rows.size() + 1) + " (line " + std::to_string(line_no) + ")");
    };
    parse_col(a_col);
    parse_col(y_col);
    for (auto j : l_cols) parse_col(j);
    for (auto j : z_cols) parse_col(j);
    for (auto j : u_cols) parse_col(j);
    rows.push_back(std::move(values));
  }
  require(!rows.empty(), ErrorKind::empty_data, path.string() + " has zero data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  RowMatrix l(n, static_cast<Eigen::Index>(l_cols.size()));
  RowMatrix z(n, static_cast<Eigen::Index>(z_cols.size()));
  Vector a(n), y(n);
  std::optional<RowMatrix> u;
  if (!u_cols.empty()) u = RowMatrix(n, static_cast<Eigen::Index>(u_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    a[i] = r[a_col];
    y[i] = r[y_col];
    for (std::size_t j = 0; j < l_cols.size(); ++j) l(i, static_cast<Eigen::Index>(j)) = r[l_cols[j]];
    for (std::size_t j = 0; j < z_cols.size(); ++j) z(i, static_cast<Eigen::Index>(j)) = r[z_cols[j]];
    for (std::size_t j = 0; j < u_cols.size(); ++j) (*u)(i, static_cast<Eigen::Index>(j)) = r[u_cols[j]];
  }
  Dataset data(std::move(l), std::move(z), std::move(a), std::move(y), std::move(u));
  data.l_names = schema.covariates;
  data.z_names = schema.instruments;
  data.u_names = schema.latent;
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path, bool include_latent) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  std::vector<std::string> header;
  for (const auto& n : data.l_names) header.push_back(n);
  for (const auto& n : data.z_names) header.push_back(n);
  header.push_back("a");
  header.push_back("y");
  const bool latent = include_latent && data.latent_u().has_value();
  if (latent)
    for (const auto& n : data.u_names) header.push_back(n);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto o = data[i];
    bool first = true;
    auto emit = [&](double v) {
      if (!first) out << ',';
      out << format_double(v);
      first = false;
    };
    for (double v : o.l) emit(v);
    for (double v : o.z) emit(v);
    emit(o.a);
    emit(o.y);
    if (latent)
      for (Eigen::Index j = 0; j < data.latent_u()->cols(); ++j)
        emit((*data.latent_u())(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

void write_latent(const Dataset& data, const std::filesystem::path& path) {
  require(data.latent_u().has_value(), ErrorKind::misuse, "dataset has no latent columns");
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  const auto& u = *data.latent_u();
  for (std::size_t j = 0; j < data.u_names.size(); ++j) out << (j ? "," : "") << data.u_names[j];
  out << '\n';
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) out << (j ? "," : "") << format_double(u(i, j));
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Folds

std::vector<Index> FoldPlan::fold_rows(std::size_t k) const {
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i)
    if (fold_of[i] == k) rows.push_back(i);
  return rows;
}

std::vector<Index> FoldPlan::complement_rows(std::size_t k) const {
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i)
    if (fold_of[i] != k) rows.push_back(i);
  return rows;
}

std::vector<Index> FoldPlan::subsplit_rows(std::size_t k, int part) const {
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i)
    if (subsplit[k][i] == part) rows.push_back(i);
  return rows;
}

std::vector<Index> FoldPlan::inner_rows(std::size_t k, std::size_t j) const {
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i)
    if (fold_of[i] == k && inner_fold_of[i] == j) rows.push_back(i);
  return rows;
}

std::vector<Index> FoldPlan::inner_complement_rows(std::size_t k, std::size_t j) const {
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i)
    if (fold_of[i] == k && inner_fold_of[i] != j) rows.push_back(i);
  return rows;
}

namespace {

// Assigns a shuffled permutation of `rows` to `parts` contiguous blocks.
std::vector<std::uint32_t> block_assign(std::vector<Index> rows, std::size_t parts, Rng& rng,
                                        std::size_t n_total) {
  std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::uint32_t> label(n_total, 0);
  const std::size_t m = rows.size();
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t size = m / parts + (p < m % parts ? 1 : 0);
    for (std::size_t t = 0; t < size; ++t) label[rows[pos++]] = static_cast<std::uint32_t>(p);
  }
  return label;
}

}  // namespace

FoldPlan make_folds(std::size_t n, std::size_t folds, double subsplit_fraction,
                    std::uint64_t seed) {
  require(folds >= 2 && folds <= n, ErrorKind::invalid_plan,
          "fold count must satisfy 2 <= K <= n (K=" + std::to_string(folds) +
              ", n=" + std::to_string(n) + ")");
  require(n >= 2 * folds, ErrorKind::invalid_plan,
          "need n >= 2K so every fold and subsplit is nonempty");
  require(subsplit_fraction > 0.0 && subsplit_fraction < 1.0, ErrorKind::invalid_plan,
          "subsplit fraction must lie in (0, 1)");
  FoldPlan plan;
  plan.n = n;
  plan.folds = folds;
  plan.subsplit_fraction = subsplit_fraction;
  plan.seed = seed;
  std::vector<Index> all(n);
  std::iota(all.begin(), all.end(), Index{0});
  Rng rng = make_rng(seed, 1);
  plan.fold_of = block_assign(all, folds, rng, n);
  plan.subsplit.assign(folds, std::vector<std::uint8_t>(n, 0));
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<Index> rest = plan.complement_rows(k);
    Rng sub_rng = make_rng(seed, 2, k);
    std::shuffle(rest.begin(), rest.end(), sub_rng);
    const std::size_t m = rest.size();
    auto first = static_cast<std::size_t>(std::llround(subsplit_fraction * static_cast<double>(m)));
    first = std::clamp<std::size_t>(first, 1, m - 1);
    for (std::size_t t = 0; t < m; ++t) plan.subsplit[k][rest[t]] = t < first ? 1 : 2;
  }
  return plan;
}

FoldPlan make_nested_folds(std::size_t n, std::size_t folds, std::size_t inner_folds,
                           std::uint64_t seed) {
  require(inner_folds >= 2, ErrorKind::invalid_plan, "nested cross-fitting needs J >= 2");
  require(n >= 2 * folds * inner_folds, ErrorKind::invalid_plan,
          "nested cross-fitting needs n >= 2KJ");
  FoldPlan plan = make_folds(n, folds, 0.5, seed);
  plan.inner_folds = inner_folds;
  plan.inner_fold_of.assign(n, 0);
  for (std::size_t k = 0; k < folds; ++k) {
    Rng rng = make_rng(seed, 3, k);
    auto labels = block_assign(plan.fold_rows(k), inner_folds, rng, n);
    for (Index i : plan.fold_rows(k)) plan.inner_fold_of[i] = labels[i];
  }
  return plan;
}

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

double quantile(std::span<const double> x, double p) {
  require(!x.empty(), ErrorKind::empty_data, "quantile of empty sample");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace ivdrf
