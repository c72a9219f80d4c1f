#include "ivdrf/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ivdrf/error.hpp"

namespace ivdrf {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

// Empty cell for NaN so downstream readers see a missing value.
std::string cell(double x) { return std::isfinite(x) ? format_double(x) : std::string(); }

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json num_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  close_out(out, path);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> l_header(const std::vector<std::string>& names, std::size_t d) {
  std::vector<std::string> h;
  for (std::size_t j = 0; j < d; ++j) h.push_back(j < names.size() ? names[j] : "l" + std::to_string(j + 1));
  return h;
}

std::pair<std::string, std::string> framework_estimator(ScoreTag t) {
  switch (t) {
    case ScoreTag::aipw_iv: return {"iv", "aipw"};
    case ScoreTag::ipw_iv: return {"iv", "ipw"};
    case ScoreTag::or_iv: return {"iv", "or"};
    case ScoreTag::aipw_nuc: return {"nuc", "aipw"};
    case ScoreTag::ipw_nuc: return {"nuc", "ipw"};
    case ScoreTag::or_nuc: return {"nuc", "or"};
    case ScoreTag::degenerate_iv: return {"iv", "degenerate"};
    case ScoreTag::multicat_iv: return {"iv", "multicat"};
  }
  return {"?", "?"};
}

}  // namespace

ConfigMap read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  ConfigMap cfg;
  if (trim(text).rfind('{', 0) == 0) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, "invalid manifest JSON in " + path.string() + ": " + e.what());
    }
    require(j.contains("config") && j["config"].is_object(), ErrorKind::schema,
            "manifest " + path.string() + " has no config object");
    for (const auto& [k, v] : j["config"].items()) cfg[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return cfg;
  }
  std::istringstream lines(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(lines, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::parse,
            path.string() + ":" + std::to_string(no) + ": expected key = value");
    cfg[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

void write_manifest(const std::filesystem::path& path, std::string_view command, const ConfigMap& config) {
  json j;
  j["tool"] = "ivdrf";
  j["version"] = std::string(kVersion);
  j["command"] = std::string(command);
  j["config"] = json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  write_json(path, j);
}

void write_drf_csv(const std::filesystem::path& path, const DrfEstimate& est, const BootstrapResult* boot) {
  auto out = open_out(path);
  out << "a,theta,se,ci_lo,ci_hi,bias";
  if (boot) out << ",boot_sd,boot_lo,boot_hi";
  out << '\n';
  for (std::size_t i = 0; i < est.grid.size(); ++i) {
    auto get = [&](const std::vector<double>& v) { return i < v.size() ? v[i] : std::nan(""); };
    out << format_double(est.grid[i]) << ',' << cell(est.missing.empty() || !est.missing[i] ? est.theta[i] : std::nan(""))
        << ',' << cell(get(est.se)) << ',' << cell(get(est.ci_lo)) << ',' << cell(get(est.ci_hi)) << ','
        << cell(get(est.bias));
    if (boot) out << ',' << cell(get(boot->sd)) << ',' << cell(get(boot->lo)) << ',' << cell(get(boot->hi));
    out << '\n';
  }
  close_out(out, path);
}

void write_drf_json(const std::filesystem::path& path, const DrfEstimate& est, const BootstrapResult* boot) {
  json j;
  j["method"] = std::string(to_string(est.method));
  j["kernel"] = std::string(to_string(est.kernel));
  j["n"] = est.n;
  if (est.method == DrfMethod::llkr) j["bandwidth"] = est.h;
  else j["spline_df"] = est.spline_df;
  j["grid"] = num_array(est.grid);
  j["theta"] = num_array(est.theta);
  j["sigma"] = num_array(est.sigma);
  j["se"] = num_array(est.se);
  j["ci_lo"] = num_array(est.ci_lo);
  j["ci_hi"] = num_array(est.ci_hi);
  j["bias"] = num_array(est.bias);
  json errs = json::object();
  for (std::size_t i = 0; i < est.point_errors.size(); ++i)
    if (!est.point_errors[i].empty()) errs[format_double(est.grid[i])] = est.point_errors[i];
  j["point_errors"] = errs;
  json deg = json::array();
  for (std::size_t i = 0; i < est.degenerate_variance.size(); ++i)
    if (est.degenerate_variance[i]) deg.push_back(est.grid[i]);
  j["degenerate_variance"] = deg;
  if (est.bandwidth) {
    json b;
    b["objective"] = std::string(to_string(est.bandwidth->objective_kind));
    b["grid"] = num_array(est.bandwidth->grid);
    b["objective_values"] = num_array(est.bandwidth->objective);
    b["excluded_high_leverage"] = est.bandwidth->excluded_high_leverage;
    j["bandwidth_selection"] = b;
  }
  if (boot) {
    json b;
    b["replicates"] = boot->replicates;
    b["failures"] = boot->failures;
    b["sd"] = num_array(boot->sd);
    b["lo"] = num_array(boot->lo);
    b["hi"] = num_array(boot->hi);
    b["failure_messages"] = boot->failure_messages;
    j["bootstrap"] = b;
  }
  write_json(path, j);
}

void write_scores_csv(const std::filesystem::path& path, const CrossfitResult& res) {
  auto out = open_out(path);
  out << "index,fold,tag,weighting,value\n";
  for (const auto& s : res.scores)
    for (std::size_t i = 0; i < s.values.size(); ++i)
      out << i << ',' << s.fold[i] << ',' << to_string(s.tag) << ',' << s.weighting_id << ','
          << format_double(s.values[i]) << '\n';
  close_out(out, path);
}

void write_relevance_csv(const std::filesystem::path& path, const RelevanceCurve& curve,
                         const std::vector<std::string>& l_names) {
  auto out = open_out(path);
  const auto d = static_cast<std::size_t>(curve.l_grid.cols());
  out << "a,l_index";
  for (const auto& h : l_header(l_names, d)) out << ',' << h;
  out << ",divergence,density_var,floor_hit,below_threshold\n";
  for (std::size_t ia = 0; ia < curve.a_grid.size(); ++ia)
    for (Eigen::Index g = 0; g < curve.l_grid.rows(); ++g) {
      const auto gi = static_cast<std::size_t>(g);
      out << format_double(curve.a_grid[ia]) << ',' << g;
      for (std::size_t c = 0; c < d; ++c) out << ',' << format_double(curve.l_grid(g, static_cast<Eigen::Index>(c)));
      const double v = curve.divergence[ia][gi];
      out << ',' << cell(v) << ',' << cell(curve.density_var[ia][gi]) << ','
          << static_cast<int>(curve.floor_hit[ia][gi]) << ',' << (std::isfinite(v) && v < curve.threshold ? 1 : 0)
          << '\n';
    }
  close_out(out, path);
}

void write_kappa_csv(const std::filesystem::path& path, const KappaMap& map, const std::vector<std::string>& l_names) {
  auto out = open_out(path);
  const auto d = static_cast<std::size_t>(map.l_grid.cols());
  out << "a,l_index";
  for (const auto& h : l_header(l_names, d)) out << ',' << h;
  out << ",kappa,crossing\n";
  for (std::size_t ia = 0; ia < map.a_grid.size(); ++ia)
    for (Eigen::Index g = 0; g < map.l_grid.rows(); ++g) {
      const auto gi = static_cast<std::size_t>(g);
      out << format_double(map.a_grid[ia]) << ',' << g;
      for (std::size_t c = 0; c < d; ++c) out << ',' << format_double(map.l_grid(g, static_cast<Eigen::Index>(c)));
      out << ',' << format_double(map.kappa[ia][gi]) << ',' << static_cast<int>(map.crossing[ia][gi]) << '\n';
    }
  close_out(out, path);
}

namespace {
json verdict_json(const UrwfVerdict& v) {
  json j;
  j["weighting"] = v.weighting_id;
  j["interval"] = {v.interval.lo, v.interval.hi};
  j["a_grid_points"] = v.a_grid.size();
  j["l_grid_points"] = v.l_grid.rows();
  j["min_abs_kappa"] = num(v.min_abs_kappa);
  j["max_abs_kappa"] = num(v.max_abs_kappa);
  j["sign_constant"] = v.sign_constant;
  j["sign"] = v.sign;
  j["epsilon"] = v.epsilon;
  j["pass"] = v.pass;
  j["note"] =
      "checked on an (a, l) grid with l at sample quantiles; the almost-sure bound is approximated by the grid "
      "minimum";
  return j;
}
}  // namespace

void write_urwf_json(const std::filesystem::path& path, const UrwfVerdict& verdict) {
  write_json(path, verdict_json(verdict));
}

void write_cover_json(const std::filesystem::path& path, const CoverPlan& plan) {
  json j;
  j["compact"] = {plan.lo, plan.hi};
  j["covers"] = plan.covers();
  json m = json::array();
  for (const auto& mem : plan.members) {
    json e;
    e["center"] = mem.center;
    e["radius"] = mem.radius;
    e["weighting"] = mem.pi.id();
    e["verdict"] = verdict_json(mem.verdict);
    m.push_back(e);
  }
  j["members"] = m;
  write_json(path, j);
}

void write_benchmark_csv(const std::filesystem::path& path, const BenchmarkReport& r) {
  auto out = open_out(path);
  out << "framework,estimator";
  for (double p : r.points) out << ",bias_" << format_double(p) << ",rmse_" << format_double(p);
  out << ",bias_interval,rmse_interval\n";
  for (const auto& c : r.cells) {
    const auto [fw, est] = framework_estimator(c.tag);
    out << fw << ',' << est;
    for (std::size_t p = 0; p < r.points.size(); ++p)
      out << ',' << format_double(c.point_bias[p]) << ',' << format_double(c.point_rmse[p]);
    out << ',' << format_double(c.interval_bias) << ',' << format_double(c.interval_rmse) << '\n';
  }
  close_out(out, path);
}

void write_benchmark_json(const std::filesystem::path& path, const BenchmarkReport& r) {
  json j;
  j["n"] = r.n;
  j["replications"] = r.reps;
  j["failures"] = r.failures;
  j["failure_messages"] = r.failure_messages;
  j["interval"] = {r.interval.lo, r.interval.hi};
  j["anchor"] = r.anchor;
  j["seed"] = r.seed;
  j["points"] = num_array(r.points);
  j["grid"] = num_array(r.grid);
  j["weights"] = num_array(r.weights);
  json cells = json::array();
  for (const auto& c : r.cells) {
    const auto [fw, est] = framework_estimator(c.tag);
    json e;
    e["framework"] = fw;
    e["estimator"] = est;
    e["point_bias"] = num_array(c.point_bias);
    e["point_rmse"] = num_array(c.point_rmse);
    e["interval_bias"] = num(c.interval_bias);
    e["interval_rmse"] = num(c.interval_rmse);
    e["grid_bias"] = num_array(c.grid_bias);
    e["grid_rmse"] = num_array(c.grid_rmse);
    e["mean_bandwidth"] = num(c.mean_h);
    cells.push_back(e);
  }
  j["cells"] = cells;
  write_json(path, j);
}

void write_law_json(const std::filesystem::path& path, const DiscreteLaw& law) {
  law.validate();
  json j;
  j["l_values"] = law.l_values;
  j["l_probs"] = law.l_probs;
  j["u_values"] = law.u_values;
  j["u_given_l"] = law.u_given_l;
  j["z_values"] = law.z_values;
  j["z_given_l"] = law.z_given_l;
  j["a_values"] = law.a_values;
  j["a_given"] = law.a_given;
  j["y_table"] = law.y_table;
  json atoms = json::array();
  for (const auto& at : law.atoms()) {
    json e;
    if (law.has_l()) e["l"] = law.l_values[at.li];
    e["u"] = law.u_values[at.ui];
    e["z"] = law.z_values[at.zi];
    e["a"] = law.a_values[at.ai];
    e["y"] = law.y(at.li, at.ui, at.ai);
    e["p"] = at.p;
    atoms.push_back(e);
  }
  j["atoms"] = atoms;
  json theta = json::array(), pa = json::array();
  for (std::size_t ai = 0; ai < law.a_values.size(); ++ai) {
    theta.push_back(law.theta(ai));
    pa.push_back(law.prob_a(ai));
  }
  j["theta"] = theta;
  j["p_a"] = pa;
  json cond = json::array();
  for (std::size_t ai = 0; ai < law.a_values.size(); ++ai)
    for (std::size_t li = 0; li < law.n_l(); ++li) {
      json e;
      e["a"] = law.a_values[ai];
      if (law.has_l()) e["l"] = law.l_values[li];
      const double p = law.prob_a_given_l(ai, li);
      e["p_a_given_l"] = p;
      e["chi2"] = p > 0.0 ? json(law.chi2(ai, li)) : json(nullptr);
      cond.push_back(e);
    }
  j["conditional"] = cond;
  write_json(path, j);
}

DiscreteLaw read_law_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "invalid law JSON in " + path.string() + ": " + e.what());
  }
  DiscreteLaw law;
  try {
    if (j.contains("l_values")) j.at("l_values").get_to(law.l_values);
    if (j.contains("l_probs")) j.at("l_probs").get_to(law.l_probs);
    j.at("u_values").get_to(law.u_values);
    j.at("u_given_l").get_to(law.u_given_l);
    j.at("z_values").get_to(law.z_values);
    j.at("z_given_l").get_to(law.z_given_l);
    j.at("a_values").get_to(law.a_values);
    j.at("a_given").get_to(law.a_given);
    j.at("y_table").get_to(law.y_table);
  } catch (const json::exception& e) {
    fail(ErrorKind::schema, "law file " + path.string() + ": " + e.what());
  }
  law.validate();
  return law;
}

}  // namespace ivdrf
