// Core domain types for a single profiled training run.
//
// A run is two time-ordered streams on one monotonic microsecond clock:
// operation intervals recorded by the framework, and periodic telemetry
// samples recorded by the device sampler. Everything downstream consumes a
// validated Run; validation sorts both streams and reports every violation
// found in one pass.

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stepscope {

/// Microseconds since the run's clock origin.
struct Timestamp {
  std::int64_t micros = 0;

  constexpr auto operator<=>(const Timestamp&) const = default;
};

constexpr std::int64_t operator-(Timestamp a, Timestamp b) {
  return a.micros - b.micros;
}

enum class Device { CPU, GPU };

std::string_view to_string(Device d);
std::optional<Device> device_from_string(std::string_view s);

/// Power domains reported by the sampler.
enum class Rail { cpu, gpu, mem, sys };

inline constexpr Rail kAllRails[] = {Rail::cpu, Rail::gpu, Rail::mem,
                                     Rail::sys};
/// Component rails; `sys` is the whole-board reading and may overlap them.
inline constexpr Rail kComponentRails[] = {Rail::cpu, Rail::gpu, Rail::mem};

std::string_view to_string(Rail r);
std::optional<Rail> rail_from_string(std::string_view s);

struct OpEvent {
  std::string op_name;
  std::optional<std::string> layer;
  Device device = Device::CPU;
  std::optional<std::int64_t> step_id;
  Timestamp start;
  Timestamp end;

  std::int64_t duration_us() const { return end - start; }
  bool operator==(const OpEvent&) const = default;
};

struct TelemetrySample {
  Timestamp t;
  std::vector<double> cpu_core_util;  // fractions, one per core
  double gpu_util = 0.0;
  double power_cpu_mw = 0.0;
  double power_gpu_mw = 0.0;
  double power_mem_mw = 0.0;
  double power_sys_mw = 0.0;
  std::uint64_t mem_used_bytes = 0;

  double power_mw(Rail r) const;
  double cpu_mean_util() const;
  bool operator==(const TelemetrySample&) const = default;
};

struct RunMeta {
  std::string run_id;
  std::int64_t batch_size = 1;
  std::int64_t core_count = 1;
  std::int64_t sample_interval_us = 10000;
  std::uint64_t device_mem_capacity_bytes = 8'000'000'000ULL;
  std::int64_t warmup_steps = 3;

  bool operator==(const RunMeta&) const = default;
};

struct StepWindow {
  std::int64_t step_id = 0;
  Timestamp start;
  Timestamp end;
  bool is_warmup = false;

  std::int64_t duration_us() const { return end - start; }
  bool contains(Timestamp t) const { return start <= t && t < end; }
  bool operator==(const StepWindow&) const = default;
};

/// Self-reported memory decomposition. Absent fields were not reported.
struct MemoryBreakdown {
  std::optional<std::uint64_t> parameters_bytes;
  std::optional<std::uint64_t> gradients_bytes;
  std::optional<std::uint64_t> input_bytes;
  std::optional<std::uint64_t> intermediate_bytes;
  std::uint64_t workspace_slack_bytes = 0;

  /// Sum of the four parts, only when every part is present.
  std::optional<std::uint64_t> total() const;
  /// True unless all parts are present and exceed peak + slack.
  bool consistent_with_peak(std::uint64_t peak_bytes) const;
  bool operator==(const MemoryBreakdown&) const = default;
};

enum class ErrorCode {
  EmptyTrace,
  ClockSkew,
  CoreCountMismatch,
  InvalidOp,
  UtilizationOutOfRange,
  NegativePower,
  NegativeTimestamp,
  InvalidMeta,
  MalformedLine,
  UnknownDevice,
  UnknownField,
  FileNotFound,
  InconsistentMemoryBreakdown,
  NoSamplesInWindow,
  NoCompleteSteps,
  NoSteps,
  OverlappingSteps,
  SignalTooShort,
  MissingThroughput,
  MissingEnergy,
  MixedModels,
  InvalidSpec,
  UsageError,
};

std::string_view to_string(ErrorCode c);

enum class Severity { warning, error };

struct Diagnostic {
  Severity severity = Severity::error;
  ErrorCode code = ErrorCode::MalformedLine;
  std::string message;
  std::optional<std::size_t> line{};  // 1-based, when the source is a file
  std::string source{};               // file path or stream name; may be empty

  /// "source:line: error: Code: message"
  std::string render() const;
  bool operator==(const Diagnostic&) const = default;
};

using Diagnostics = std::vector<Diagnostic>;

bool has_errors(const Diagnostics& d);
std::size_t count_errors(const Diagnostics& d);

/// Thrown by analysis stages when a metric is undefined for the input.
class AnalysisError : public std::runtime_error {
 public:
  AnalysisError(ErrorCode code, const std::string& what);
  /// Aggregate of several independent failures; codes() lists all of them.
  AnalysisError(std::vector<ErrorCode> codes, const std::string& what);

  ErrorCode code() const { return codes_.front(); }
  const std::vector<ErrorCode>& codes() const { return codes_; }
  bool has(ErrorCode c) const;

 private:
  std::vector<ErrorCode> codes_;
};

/// Runs independent analysis stages, keeping every AnalysisError so one
/// failure does not hide the next.
class ErrorCollector {
 public:
  template <typename Fn>
  void attempt(Fn&& fn) {
    try {
      fn();
    } catch (const AnalysisError& e) {
      add(e);
    }
  }
  void add(const AnalysisError& e);
  bool empty() const { return codes_.empty(); }
  /// Throws the combined error if anything failed.
  void rethrow() const;

 private:
  std::vector<ErrorCode> codes_;
  std::string messages_;
};

/// A validated run. Samples are sorted by `t`; ops are sorted by start.
struct Run {
  RunMeta meta;
  std::vector<OpEvent> ops;
  std::vector<TelemetrySample> samples;
  std::optional<MemoryBreakdown> memory_breakdown;

  Timestamp begin() const;
  /// One past the last observed instant: max of last op end and the last
  /// sample plus the nominal interval.
  Timestamp finish() const;
  std::int64_t duration_us() const { return finish() - begin(); }
  bool operator==(const Run&) const = default;
};

struct ValidationResult {
  std::optional<Run> run;  // present iff there are no error diagnostics
  Diagnostics diagnostics;

  bool ok() const { return run.has_value(); }
};

ValidationResult validate_run(RunMeta meta, std::vector<OpEvent> ops,
                              std::vector<TelemetrySample> samples,
                              std::optional<MemoryBreakdown> memory = {});

/// Re-validates an existing run; a validated run comes back unchanged.
ValidationResult validate_run(const Run& run);

}  // namespace stepscope
