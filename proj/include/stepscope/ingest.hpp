// On-disk formats: line-delimited JSON op traces, CSV telemetry dumps, and
// JSON run / sweep manifests.
//
//   op trace:   {"op":"MatMul","layer":"fc1","device":"GPU","step":0,
//                "start_us":100,"end_us":350}            one object per line
//   telemetry:  t_us,c0,..,c{n-1},gpu,p_cpu_mw,p_gpu_mw,p_mem_mw,p_sys_mw,
//               mem_bytes                                 utilization in %
//
// Parsers never throw on bad input. Every non-blank record either yields a
// value or at least one error diagnostic carrying its 1-based line number.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stepscope/trace_model.hpp"

namespace stepscope::ingest {

struct OpTraceParse {
  std::vector<OpEvent> ops;
  std::vector<std::size_t> op_lines;  // source line of each op
  Diagnostics diagnostics;
};

struct TelemetryParse {
  std::vector<TelemetrySample> samples;
  std::vector<std::size_t> sample_lines;
  Diagnostics diagnostics;
};

OpTraceParse parse_op_trace(std::string_view bytes,
                            const std::string& source = {});
TelemetryParse parse_telemetry(std::string_view bytes, std::int64_t core_count,
                               const std::string& source = {});

std::string write_op_trace(const std::vector<OpEvent>& ops);
std::string write_telemetry(const std::vector<TelemetrySample>& samples,
                            std::int64_t core_count);

/// Exact decimal rendering of a utilization fraction as a percentage.
/// parse_percent(format_percent(x)) == x for every finite x.
std::string format_percent(double fraction);
/// Parses a percent token and returns the fraction, or nullopt when the token
/// is not a number.
std::optional<double> parse_percent(std::string_view token);

struct RunManifest {
  RunMeta meta;
  std::string op_trace_path;
  std::string telemetry_path;
  std::optional<MemoryBreakdown> memory_breakdown;

  bool operator==(const RunManifest&) const = default;
};

struct ManifestParse {
  std::optional<RunManifest> manifest;
  Diagnostics diagnostics;
};

ManifestParse parse_manifest(std::string_view json_text,
                             const std::string& source = {});
std::string write_manifest(const RunManifest& manifest);

struct LoadedRun {
  std::optional<RunManifest> manifest;
  std::optional<Run> run;
  Diagnostics diagnostics;
};

/// Reads a manifest and the files it names, resolving relative paths against
/// the manifest's directory, then validates the assembled run.
LoadedRun load_run(const std::filesystem::path& manifest_path);
LoadedRun load_run(const RunManifest& manifest,
                   const std::filesystem::path& base_dir);

struct SweepEntry {
  std::string model;
  LoadedRun loaded;
};

struct SweepManifestLoad {
  std::vector<SweepEntry> entries;
  Diagnostics diagnostics;
};

/// A sweep manifest is a JSON array of {"model": name, "manifest": path or
/// inline run manifest}.
SweepManifestLoad load_sweep_manifest(const std::filesystem::path& path);

/// Writes `<stem>.manifest.json`, `<stem>.ops.jsonl` and
/// `<stem>.telemetry.csv` into `dir`; returns the manifest path.
std::filesystem::path write_run_files(const Run& run, const std::filesystem::path& dir,
                     const std::string& stem = "run");

std::optional<std::string> read_file(const std::filesystem::path& path);

}  // namespace stepscope::ingest
