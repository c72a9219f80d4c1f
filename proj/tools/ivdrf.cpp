// ivdrf: simulate, diagnose, estimate and benchmark from the command line.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ivdrf/error.hpp"
#include "ivdrf/exec.hpp"
#include "ivdrf/io.hpp"
#include "ivdrf/pipeline.hpp"
#include "ivdrf/sim.hpp"

namespace fs = std::filesystem;
using namespace ivdrf;

namespace {

enum Exit { ok = 0, usage = 1, schema_error = 2, refused = 3, numerical = 4, io_error = 5 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::schema:
    case ErrorKind::parse:
    case ErrorKind::empty_data: return schema_error;
    case ErrorKind::refused: return refused;
    case ErrorKind::io: return io_error;
    case ErrorKind::invalid_argument:
    case ErrorKind::invalid_plan:
    case ErrorKind::misuse:
    case ErrorKind::internal: return usage;
    default: return numerical;
  }
}

// Effective configuration: defaults, then the config file, then explicit flags.
struct Command {
  std::string name;
  ConfigMap defaults;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, bool> switch_values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
  CLI::App* app = nullptr;

  void value(const std::string& key, const std::string& help) {
    options[key] = app->add_option("--" + dashed(key), flag_values[key], help + " [" + defaults.at(key) + "]");
  }
  void flag(const std::string& key, const std::string& help) {
    options[key] = app->add_flag("--" + dashed(key), switch_values[key], help);
  }
  static std::string dashed(std::string k) {
    for (char& c : k)
      if (c == '_') c = '-';
    return k;
  }

  ConfigMap effective() const {
    ConfigMap cfg = defaults;
    if (!config_path.empty()) {
      for (const auto& [k, v] : read_config(config_path)) {
        require(defaults.count(k) > 0, ErrorKind::invalid_argument,
                "unknown key '" + k + "' in " + config_path + " for " + name);
        cfg[k] = v;
      }
    }
    for (const auto& [k, opt] : options) {
      if (opt->count() == 0) continue;
      auto sw = switch_values.find(k);
      cfg[k] = sw != switch_values.end() ? (sw->second ? "true" : "false") : flag_values.at(k);
    }
    return cfg;
  }
};

// Typed accessors over the string map.
std::string get(const ConfigMap& c, const std::string& k) { return c.at(k); }

double get_double(const ConfigMap& c, const std::string& k) {
  const auto& s = c.at(k);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::invalid_argument, "option '" + k + "' expects a number, got '" + s + "'");
}

std::uint64_t get_u64(const ConfigMap& c, const std::string& k) {
  const auto& s = c.at(k);
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos == s.size() && s.find('-') == std::string::npos) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::invalid_argument, "option '" + k + "' expects a nonnegative integer, got '" + s + "'");
}

bool get_bool(const ConfigMap& c, const std::string& k) {
  const auto& s = c.at(k);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail(ErrorKind::invalid_argument, "option '" + k + "' expects true/false, got '" + s + "'");
}

std::vector<std::string> get_list(const ConfigMap& c, const std::string& k) {
  std::vector<std::string> out;
  std::stringstream ss(c.at(k));
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> get_doubles(const ConfigMap& c, const std::string& k) {
  std::vector<double> v;
  ConfigMap tmp;
  for (const auto& s : get_list(c, k)) {
    tmp["x"] = s;
    v.push_back(get_double(tmp, "x"));
  }
  return v;
}

TargetInterval get_interval(const ConfigMap& c, const std::string& k) {
  const auto v = get_doubles(c, k);
  require(v.size() == 2, ErrorKind::invalid_argument, "option '" + k + "' expects lo,hi");
  return {v[0], v[1]};
}

Dataset load_input(const ConfigMap& c) {
  require(!c.at("data").empty(), ErrorKind::invalid_argument, "--data is required");
  Schema s;
  s.treatment = get(c, "treatment");
  s.outcome = get(c, "outcome");
  s.covariates = get_list(c, "covariates");
  s.instruments = get_list(c, "instruments");
  s.latent = get_list(c, "latent");
  Dataset d = load_dataset(c.at("data"), s);
  if (!c.at("support").empty()) {
    const auto v = get_doubles(c, "support");
    require(v.size() == 2, ErrorKind::invalid_argument, "--support expects lo,hi");
    d = d.with_support({v[0], v[1]});
  }
  return d;
}

void add_data_options(Command& cmd) {
  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"data", ""}, {"treatment", "a"}, {"outcome", "y"}, {"covariates", "l"}, {"instruments", "z"},
           {"latent", ""}, {"support", ""}})
    cmd.defaults[k] = v;
  cmd.value("data", "input CSV");
  cmd.value("treatment", "treatment column");
  cmd.value("outcome", "outcome column");
  cmd.value("covariates", "comma-separated covariate columns");
  cmd.value("instruments", "comma-separated instrument columns");
  cmd.value("latent", "comma-separated latent columns (simulated data only)");
  cmd.value("support", "treatment support lo,hi (default: observed range)");
}

void add_learner_options(Command& cmd) {
  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"regression", "penalized_spline"}, {"nuisance_df", "8"}, {"density_bw", "1"}})
    cmd.defaults[k] = v;
  cmd.value("regression", "nuisance regression: penalized_spline or local_linear");
  cmd.value("nuisance_df", "spline basis size per coordinate");
  cmd.value("density_bw", "multiplier on the rule-of-thumb density bandwidths");
}

NuisanceConfig nuisance_config(const ConfigMap& c) {
  NuisanceConfig n;
  n.regression.method = parse_regression_method(get(c, "regression"));
  n.regression.spline_df = static_cast<int>(get_u64(c, "nuisance_df"));
  n.density.bandwidth_multiplier = get_double(c, "density_bw");
  return n;
}

std::vector<ScoreTag> tags_from(const ConfigMap& c) {
  std::vector<ScoreTag> tags;
  for (const auto& fw : get_list(c, "frameworks"))
    for (const auto& est : get_list(c, "estimators")) {
      require(fw == "iv" || fw == "nuc", ErrorKind::invalid_argument, "framework must be iv or nuc");
      tags.push_back(parse_score_tag(est + "_" + fw));
    }
  require(!tags.empty(), ErrorKind::invalid_argument, "no estimators selected");
  return tags;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create output directory " + dir);
}

// ---------------------------------------------------------------------------

void setup_simulate(Command& cmd) {
  cmd.defaults = {{"n", "1000"}, {"seed", "0"}, {"variant", "paper_main"}, {"params", ""}, {"write_latent", "false"}};
  cmd.value("n", "rows to simulate");
  cmd.value("seed", "master seed");
  cmd.value("variant", "paper_main, unconfounded, binary_iv_crossing or discrete_toy");
  cmd.value("params", "law JSON for discrete_toy (default: built-in additive instance)");
  cmd.flag("write_latent", "also write the latent confounder to latent.csv");
}

void run_simulate(const Command& cmd, const ConfigMap& c) {
  const auto variant = parse_dgp_variant(get(c, "variant"));
  const auto n = static_cast<std::size_t>(get_u64(c, "n"));
  const auto seed = get_u64(c, "seed");
  Dataset d;
  if (variant == DgpVariant::discrete_toy) {
    const auto law = c.at("params").empty() ? DiscreteLaw::additive_example(0, true) : read_law_json(c.at("params"));
    write_law_json(fs::path(cmd.out_dir) / "law.json", law);
    d = sample_law(law, n, seed);
  } else {
    d = simulate_dgp({n, seed, variant});
  }
  write_dataset(d, fs::path(cmd.out_dir) / "data.csv");
  if (get_bool(c, "write_latent")) write_latent(d, fs::path(cmd.out_dir) / "latent.csv");
}

void setup_common_estimation(Command& cmd) {
  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"interval", "0.25,0.75"}, {"weighting", "density"}, {"holdout", "0.2"}, {"seed", "0"}})
    cmd.defaults[k] = v;
  cmd.value("interval", "target interval lo,hi");
  cmd.value("weighting", "density, density@a0, coordinate:j, poly:j:deg or constant:c");
  cmd.value("holdout", "fraction held out to fit a density weighting function");
  cmd.value("seed", "master seed");
}

void setup_diagnose(Command& cmd) {
  add_data_options(cmd);
  setup_common_estimation(cmd);
  add_learner_options(cmd);
  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"a_points", "51"}, {"neighbours", "200"}, {"threshold", "0.05"}, {"epsilon", ""}, {"cover", "false"}})
    cmd.defaults[k] = v;
  cmd.value("a_points", "a-grid size");
  cmd.value("neighbours", "rows per grid l used to sample Z given L");
  cmd.value("threshold", "divergence threshold for flagging weak relevance");
  cmd.value("epsilon", "uniform relevance threshold (default 0.05 sd(Z_pi))");
  cmd.flag("cover", "also build a finite cover of the interval");
}

void run_diagnose_cmd(const Command& cmd, const ConfigMap& c) {
  const Dataset d = load_input(c);
  DiagnosePlan p;
  p.interval = get_interval(c, "interval");
  p.weighting = get(c, "weighting");
  p.holdout = get_double(c, "holdout");
  p.seed = get_u64(c, "seed");
  p.a_points = static_cast<std::size_t>(get_u64(c, "a_points"));
  p.relevance.neighbours = static_cast<std::size_t>(get_u64(c, "neighbours"));
  p.relevance.threshold = get_double(c, "threshold");
  const auto nc = nuisance_config(c);
  p.relevance.density = nc.density;
  p.pi_density = nc.density;
  p.urwf.regression = nc.regression;
  if (!c.at("epsilon").empty()) p.urwf.epsilon = get_double(c, "epsilon");
  p.cover = get_bool(c, "cover");
  p.cover_config.urwf = p.urwf;
  p.cover_config.density = nc.density;
  const auto out = run_diagnose(d, p);
  const fs::path dir(cmd.out_dir);
  write_relevance_csv(dir / "relevance.csv", out.relevance, d.l_names);
  write_urwf_json(dir / "urwf.json", out.verdict);
  write_kappa_csv(dir / "kappa.csv", out.kappa, d.l_names);
  if (out.cover) write_cover_json(dir / "cover.json", *out.cover);
  std::cout << "uniform relevance check on [" << format_double(p.interval.lo) << ", "
            << format_double(p.interval.hi) << "]: " << (out.verdict.pass ? "pass" : "fail")
            << " (min |kappa| " << format_double(out.verdict.min_abs_kappa) << ", epsilon "
            << format_double(out.verdict.epsilon) << ")\n";
}

void setup_estimate(Command& cmd) {
  add_data_options(cmd);
  setup_common_estimation(cmd);
  add_learner_options(cmd);
  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"folds", "5"},         {"nested", "false"},    {"inner_folds", "2"}, {"frameworks", "iv"},
           {"estimators", "aipw"}, {"method", "llkr"},     {"kernel", "epanechnikov"},
           {"bandwidth", ""},      {"objective", "loocv"}, {"grid_size", "51"},  {"spline_df", "3"},
           {"bootstrap", "0"},     {"force", "false"},     {"emp_cap", "0"},     {"epsilon", ""}})
    cmd.defaults[k] = v;
  cmd.value("folds", "cross-fitting folds K");
  cmd.flag("nested", "nested cross-fitting");
  cmd.value("inner_folds", "inner folds J for nested cross-fitting");
  cmd.value("frameworks", "iv and/or nuc; the first pair is smoothed");
  cmd.value("estimators", "aipw, ipw, or");
  cmd.value("method", "llkr or erm");
  cmd.value("kernel", "epanechnikov, triangular or uniform");
  cmd.value("bandwidth", "fixed bandwidth (default: selected)");
  cmd.value("objective", "loocv, gcv or cp");
  cmd.value("grid_size", "points on the output curve");
  cmd.value("spline_df", "natural spline degrees of freedom for erm");
  cmd.value("bootstrap", "pairs bootstrap replicates (0 disables)");
  cmd.flag("force", "estimate even when the uniform relevance check fails");
  cmd.value("emp_cap", "cap on the empirical measure per fold (0 keeps all)");
  cmd.value("epsilon", "uniform relevance threshold (default 0.05 sd(Z_pi))");
}

void run_estimate_cmd(const Command& cmd, const ConfigMap& c) {
  const Dataset d = load_input(c);
  EstimatePlan p;
  p.interval = get_interval(c, "interval");
  p.weighting = get(c, "weighting");
  p.holdout = get_double(c, "holdout");
  p.seed = get_u64(c, "seed");
  const auto nc = nuisance_config(c);
  p.crossfit.nuisance = nc;
  p.crossfit.folds = static_cast<std::size_t>(get_u64(c, "folds"));
  p.crossfit.nested = get_bool(c, "nested");
  p.crossfit.inner_folds = static_cast<std::size_t>(get_u64(c, "inner_folds"));
  p.crossfit.tags = tags_from(c);
  p.crossfit.emp_cap = static_cast<std::size_t>(get_u64(c, "emp_cap"));
  p.method = parse_drf_method(get(c, "method"));
  p.drf.kernel = parse_kernel(get(c, "kernel"));
  if (!c.at("bandwidth").empty()) p.drf.h = get_double(c, "bandwidth");
  p.drf.objective = parse_bandwidth_objective(get(c, "objective"));
  p.drf.grid_size = static_cast<std::size_t>(get_u64(c, "grid_size"));
  p.drf.spline_df = static_cast<int>(get_u64(c, "spline_df"));
  p.drf.density = nc.density;
  p.bootstrap = static_cast<std::size_t>(get_u64(c, "bootstrap"));
  p.force = get_bool(c, "force");
  p.pi_density = nc.density;
  p.urwf.regression = nc.regression;
  if (!c.at("epsilon").empty()) p.urwf.epsilon = get_double(c, "epsilon");
  const auto out = run_estimate(d, p);
  const fs::path dir(cmd.out_dir);
  const BootstrapResult* boot = out.bootstrap ? &*out.bootstrap : nullptr;
  write_drf_csv(dir / "drf.csv", out.drf, boot);
  write_drf_json(dir / "drf.json", out.drf, boot);
  write_scores_csv(dir / "scores.csv", out.crossfit);
  write_urwf_json(dir / "urwf.json", out.verdict);
  if (!out.verdict.pass) std::cerr << "warning: uniform relevance check failed; estimates forced\n";
}

void setup_benchmark(Command& cmd) {
  add_learner_options(cmd);
  cmd.defaults.insert({{"n", "2000"},
                       {"reps", "100"},
                       {"seed", "0"},
                       {"folds", "5"},
                       {"interval", "0.25,0.75"},
                       {"anchor", ""},
                       {"points", ""},
                       {"frameworks", "iv,nuc"},
                       {"estimators", "aipw"},
                       {"aux_n", "10000"},
                       {"variant", "paper_main"},
                       {"emp_cap", "0"}});
  cmd.value("n", "sample size per replication");
  cmd.value("reps", "replications M");
  cmd.value("seed", "master seed");
  cmd.value("folds", "cross-fitting folds K");
  cmd.value("interval", "target interval lo,hi");
  cmd.value("anchor", "density anchor (default: interval midpoint)");
  cmd.value("points", "comma-separated evaluation points (default: midpoint and +-0.1)");
  cmd.value("frameworks", "iv and/or nuc");
  cmd.value("estimators", "aipw, ipw, or");
  cmd.value("aux_n", "auxiliary sample size used to fit the weighting function");
  cmd.value("variant", "paper_main, unconfounded or binary_iv_crossing");
  cmd.value("emp_cap", "cap on the empirical measure per fold (0 keeps all)");
}

void run_benchmark_cmd(const Command& cmd, const ConfigMap& c) {
  BenchmarkConfig b;
  b.n = static_cast<std::size_t>(get_u64(c, "n"));
  b.reps = static_cast<std::size_t>(get_u64(c, "reps"));
  b.seed = get_u64(c, "seed");
  b.folds = static_cast<std::size_t>(get_u64(c, "folds"));
  b.interval = get_interval(c, "interval");
  if (!c.at("anchor").empty()) b.anchor = get_double(c, "anchor");
  b.points = get_doubles(c, "points");
  b.tags = tags_from(c);
  b.aux_n = static_cast<std::size_t>(get_u64(c, "aux_n"));
  b.variant = parse_dgp_variant(get(c, "variant"));
  b.emp_cap = static_cast<std::size_t>(get_u64(c, "emp_cap"));
  b.nuisance = nuisance_config(c);
  b.drf.density = b.nuisance.density;
  const auto r = run_benchmark(b);
  const fs::path dir(cmd.out_dir);
  write_benchmark_csv(dir / "benchmark.csv", r);
  write_benchmark_json(dir / "benchmark.json", r);
  for (const auto& cell : r.cells)
    std::cout << to_string(cell.tag) << ": interval bias " << format_double(cell.interval_bias) << ", rmse "
              << format_double(cell.interval_rmse) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dose-response estimation with additive instrumental variables"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::vector<std::pair<Command, void (*)(const Command&, const ConfigMap&)>> commands;
  commands.reserve(4);
  struct Spec {
    const char* name;
    const char* help;
    void (*setup)(Command&);
    void (*run)(const Command&, const ConfigMap&);
  };
  const Spec specs[] = {
      {"simulate", "simulate a dataset from a built-in design", setup_simulate, run_simulate},
      {"diagnose", "relevance, uniform relevance and kappa sign diagnostics", setup_diagnose, run_diagnose_cmd},
      {"estimate", "cross-fitted dose-response curve", setup_estimate, run_estimate_cmd},
      {"benchmark", "Monte Carlo bias/RMSE study on a built-in design", setup_benchmark, run_benchmark_cmd},
  };
  for (const auto& s : specs) {
    Command cmd;
    cmd.name = s.name;
    cmd.app = app.add_subcommand(s.name, s.help);
    commands.emplace_back(std::move(cmd), s.run);
  }
  for (std::size_t i = 0; i < commands.size(); ++i) {
    auto& cmd = commands[i].first;
    specs[i].setup(cmd);
    cmd.app->add_option("--config", cmd.config_path, "key = value file or manifest.json; flags override it");
    cmd.app->add_option("--out", cmd.out_dir, "output directory");
    cmd.app->add_option("--threads", cmd.threads, "worker threads (0 = OpenMP default)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  for (auto& [cmd, run] : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      if (cmd.threads > 0) set_threads(cmd.threads);
      const ConfigMap cfg = cmd.effective();
      ensure_dir(cmd.out_dir);
      run(cmd, cfg);
      write_manifest(fs::path(cmd.out_dir) / "manifest.json", cmd.name, cfg);
      return ok;
    } catch (const Error& e) {
      std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
      return exit_code(e.kind());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return usage;
    }
  }
  return usage;
}
