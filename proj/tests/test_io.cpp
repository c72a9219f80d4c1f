#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ivdrf/error.hpp"
#include "ivdrf/io.hpp"
#include "json.hpp"

using namespace ivdrf;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("ivdrf_io_" + name); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("key-value configs and manifests round-trip") {
    std::ofstream(tmp("cfg.txt")) << "# comment\nn = 300\n\nseed=4   \ninterval = 0.25,0.75\n";
    const auto c = read_config(tmp("cfg.txt"));
    CHECK(c.at("n") == "300");
    CHECK(c.at("seed") == "4");
    CHECK(c.at("interval") == "0.25,0.75");
    write_manifest(tmp("manifest.json"), "simulate", c);
    const auto j = nlohmann::json::parse(slurp(tmp("manifest.json")));
    CHECK(j["command"] == "simulate");
    CHECK(j["version"] == std::string(kVersion));
    CHECK(read_config(tmp("manifest.json")) == c);
    std::ofstream(tmp("bad.txt")) << "novalue\n";
    CHECK_THROWS_AS(read_config(tmp("bad.txt")), Error);
    CHECK_THROWS_AS(read_config(tmp("missing.txt")), Error);
  }

  TEST_CASE("DRF tables") {
    DrfEstimate est;
    est.grid = {0.25, 0.5};
    est.theta = {0.3, 0.45};
    est.se = {0.1, 0.2};
    est.sigma = {1, 2};
    est.ci_lo = {0.1, 0.05};
    est.ci_hi = {0.5, 0.85};
    est.bias = {std::numeric_limits<double>::quiet_NaN(), 0.01};
    est.missing = {0, 0};
    est.point_errors = {"", ""};
    est.h = 0.2;
    est.n = 10;
    write_drf_csv(tmp("drf.csv"), est);
    const auto text = slurp(tmp("drf.csv"));
    CHECK(text.rfind("a,theta,se,ci_lo,ci_hi,bias\n", 0) == 0);
    CHECK(text.find("0.25,0.3,0.1,0.1,0.5,\n") != std::string::npos);
    BootstrapResult boot;
    boot.grid = est.grid;
    boot.sd = {0.11, 0.21};
    boot.lo = {0.0, 0.1};
    boot.hi = {0.6, 0.8};
    boot.replicates = 5;
    write_drf_csv(tmp("drf_b.csv"), est, &boot);
    CHECK(slurp(tmp("drf_b.csv")).find("boot_sd,boot_lo,boot_hi") != std::string::npos);
    write_drf_json(tmp("drf.json"), est, &boot);
    const auto j = nlohmann::json::parse(slurp(tmp("drf.json")));
    CHECK(j["bandwidth"] == 0.2);
  }

  TEST_CASE("law files round-trip") {
    const auto law = DiscreteLaw::additive_example(2, true);
    write_law_json(tmp("law.json"), law);
    const auto back = read_law_json(tmp("law.json"));
    CHECK(back.a_values == law.a_values);
    CHECK(back.l_probs == law.l_probs);
    CHECK(back.a_given == law.a_given);
    CHECK(back.y_table == law.y_table);
    const auto j = nlohmann::json::parse(slurp(tmp("law.json")));
    CHECK(j.contains("theta"));
    std::ofstream(tmp("badlaw.json")) << "{\"a_values\": [1]}";
    CHECK_THROWS_AS(read_law_json(tmp("badlaw.json")), Error);
  }

  TEST_CASE("unwritable outputs raise io errors") {
    try {
      write_manifest("/nonexistent_dir/m.json", "x", {});
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
    }
  }
}
