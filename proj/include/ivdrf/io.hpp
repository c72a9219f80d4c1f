#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ivdrf/crossfit.hpp"
#include "ivdrf/diagnostics.hpp"
#include "ivdrf/drf.hpp"
#include "ivdrf/sim.hpp"

namespace ivdrf {

inline constexpr std::string_view kVersion = "0.1.0";

/// Flat key/value run configuration.
using ConfigMap = std::map<std::string, std::string>;

/// Reads `key = value` lines (# starts a comment) or a manifest JSON written by
/// write_manifest (its "config" object).
ConfigMap read_config(const std::filesystem::path& path);
/// {"tool", "version", "command", "config"} with keys in sorted order.
void write_manifest(const std::filesystem::path& path, std::string_view command, const ConfigMap& config);

void write_drf_csv(const std::filesystem::path& path, const DrfEstimate& est,
                   const BootstrapResult* boot = nullptr);
void write_drf_json(const std::filesystem::path& path, const DrfEstimate& est,
                    const BootstrapResult* boot = nullptr);
void write_scores_csv(const std::filesystem::path& path, const CrossfitResult& res);
void write_relevance_csv(const std::filesystem::path& path, const RelevanceCurve& curve,
                         const std::vector<std::string>& l_names);
void write_kappa_csv(const std::filesystem::path& path, const KappaMap& map, const std::vector<std::string>& l_names);
void write_urwf_json(const std::filesystem::path& path, const UrwfVerdict& verdict);
void write_cover_json(const std::filesystem::path& path, const CoverPlan& plan);
/// Rows framework x estimator, columns per a-point and the interval.
void write_benchmark_csv(const std::filesystem::path& path, const BenchmarkReport& report);
void write_benchmark_json(const std::filesystem::path& path, const BenchmarkReport& report);

/// Enumerated law as JSON: supports, tables, atoms, theta and per-(a, l) exact quantities.
void write_law_json(const std::filesystem::path& path, const DiscreteLaw& law);
/// Reads the table part of a law file (same keys as write_law_json emits).
DiscreteLaw read_law_json(const std::filesystem::path& path);

}  // namespace ivdrf
