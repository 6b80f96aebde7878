#include "stepscope/trace_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace stepscope {

std::string_view to_string(Device d) {
  switch (d) {
    case Device::CPU: return "CPU";
    case Device::GPU: return "GPU";
  }
  return "?";
}

std::optional<Device> device_from_string(std::string_view s) {
  if (s == "CPU") return Device::CPU;
  if (s == "GPU") return Device::GPU;
  return std::nullopt;
}

std::string_view to_string(Rail r) {
  switch (r) {
    case Rail::cpu: return "cpu";
    case Rail::gpu: return "gpu";
    case Rail::mem: return "mem";
    case Rail::sys: return "sys";
  }
  return "?";
}

std::optional<Rail> rail_from_string(std::string_view s) {
  for (Rail r : kAllRails) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

double TelemetrySample::power_mw(Rail r) const {
  switch (r) {
    case Rail::cpu: return power_cpu_mw;
    case Rail::gpu: return power_gpu_mw;
    case Rail::mem: return power_mem_mw;
    case Rail::sys: return power_sys_mw;
  }
  return 0.0;
}

double TelemetrySample::cpu_mean_util() const {
  if (cpu_core_util.empty()) return 0.0;
  return std::accumulate(cpu_core_util.begin(), cpu_core_util.end(), 0.0) /
         static_cast<double>(cpu_core_util.size());
}

std::optional<std::uint64_t> MemoryBreakdown::total() const {
  if (!parameters_bytes || !gradients_bytes || !input_bytes ||
      !intermediate_bytes) {
    return std::nullopt;
  }
  return *parameters_bytes + *gradients_bytes + *input_bytes +
         *intermediate_bytes;
}

bool MemoryBreakdown::consistent_with_peak(std::uint64_t peak_bytes) const {
  auto sum = total();
  return !sum || *sum <= peak_bytes + workspace_slack_bytes;
}

std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::ClockSkew: return "ClockSkew";
    case ErrorCode::CoreCountMismatch: return "CoreCountMismatch";
    case ErrorCode::InvalidOp: return "InvalidOp";
    case ErrorCode::UtilizationOutOfRange: return "UtilizationOutOfRange";
    case ErrorCode::NegativePower: return "NegativePower";
    case ErrorCode::NegativeTimestamp: return "NegativeTimestamp";
    case ErrorCode::InvalidMeta: return "InvalidMeta";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::UnknownDevice: return "UnknownDevice";
    case ErrorCode::UnknownField: return "UnknownField";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::InconsistentMemoryBreakdown:
      return "InconsistentMemoryBreakdown";
    case ErrorCode::NoSamplesInWindow: return "NoSamplesInWindow";
    case ErrorCode::NoCompleteSteps: return "NoCompleteSteps";
    case ErrorCode::NoSteps: return "NoSteps";
    case ErrorCode::OverlappingSteps: return "OverlappingSteps";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::MissingThroughput: return "MissingThroughput";
    case ErrorCode::MissingEnergy: return "MissingEnergy";
    case ErrorCode::MixedModels: return "MixedModels";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

std::string Diagnostic::render() const {
  std::string out;
  if (!source.empty()) {
    out += source;
    if (line) out += fmt::format(":{}", *line);
    out += ": ";
  } else if (line) {
    out += fmt::format("line {}: ", *line);
  }
  out += severity == Severity::error ? "error: " : "warning: ";
  out += to_string(code);
  out += ": ";
  out += message;
  return out;
}

bool has_errors(const Diagnostics& d) { return count_errors(d) > 0; }

std::size_t count_errors(const Diagnostics& d) {
  return static_cast<std::size_t>(
      std::count_if(d.begin(), d.end(), [](const Diagnostic& x) {
        return x.severity == Severity::error;
      }));
}

AnalysisError::AnalysisError(ErrorCode code, const std::string& what)
    : std::runtime_error(fmt::format("{}: {}", to_string(code), what)),
      codes_{code} {}

AnalysisError::AnalysisError(std::vector<ErrorCode> codes,
                             const std::string& what)
    : std::runtime_error(what), codes_(std::move(codes)) {
  if (codes_.empty()) codes_.push_back(ErrorCode::InvalidSpec);
}

bool AnalysisError::has(ErrorCode c) const {
  return std::find(codes_.begin(), codes_.end(), c) != codes_.end();
}

void ErrorCollector::add(const AnalysisError& e) {
  for (ErrorCode c : e.codes()) {
    if (std::find(codes_.begin(), codes_.end(), c) == codes_.end()) {
      codes_.push_back(c);
    }
  }
  if (!messages_.empty()) messages_ += "; ";
  messages_ += e.what();
}

void ErrorCollector::rethrow() const {
  if (!codes_.empty()) throw AnalysisError(codes_, messages_);
}

Timestamp Run::begin() const {
  std::int64_t b = samples.empty() ? 0 : samples.front().t.micros;
  if (!ops.empty()) b = std::min(b, ops.front().start.micros);
  return Timestamp{b};
}

Timestamp Run::finish() const {
  std::int64_t e = samples.empty()
                       ? 0
                       : samples.back().t.micros + meta.sample_interval_us;
  for (const auto& op : ops) e = std::max(e, op.end.micros);
  return Timestamp{e};
}

namespace {

bool is_fraction(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }
bool is_power(double x) { return std::isfinite(x) && x >= 0.0; }

void check_meta(const RunMeta& m, Diagnostics& out) {
  auto bad = [&](std::string msg) {
    out.push_back({Severity::error, ErrorCode::InvalidMeta, std::move(msg)});
  };
  if (m.batch_size < 1) bad(fmt::format("batch_size {} < 1", m.batch_size));
  if (m.core_count < 1) bad(fmt::format("core_count {} < 1", m.core_count));
  if (m.sample_interval_us <= 0) {
    bad(fmt::format("sample_interval_us {} <= 0", m.sample_interval_us));
  }
  if (m.warmup_steps < 0) {
    bad(fmt::format("warmup_steps {} < 0", m.warmup_steps));
  }
  if (m.device_mem_capacity_bytes == 0) bad("device_mem_capacity_bytes is 0");
}

void check_op(const OpEvent& op, std::size_t index, Diagnostics& out) {
  auto bad = [&](ErrorCode c, std::string msg) {
    out.push_back({Severity::error, c,
                   fmt::format("op #{} '{}': {}", index, op.op_name, msg)});
  };
  if (op.op_name.empty()) bad(ErrorCode::InvalidOp, "empty op name");
  if (op.start.micros < 0 || op.end.micros < 0) {
    bad(ErrorCode::NegativeTimestamp, "negative timestamp");
  }
  if (op.end <= op.start) {
    bad(ErrorCode::InvalidOp, fmt::format("end {} <= start {}", op.end.micros,
                                          op.start.micros));
  }
  if (op.step_id && *op.step_id < 0) {
    bad(ErrorCode::InvalidOp, fmt::format("negative step id {}", *op.step_id));
  }
}

void check_sample(const TelemetrySample& s, std::size_t index,
                  std::int64_t core_count, Diagnostics& out) {
  auto bad = [&](ErrorCode c, std::string msg) {
    out.push_back({Severity::error, c,
                   fmt::format("sample #{} (t={}): {}", index, s.t.micros,
                               msg)});
  };
  if (s.t.micros < 0) bad(ErrorCode::NegativeTimestamp, "negative timestamp");
  if (static_cast<std::int64_t>(s.cpu_core_util.size()) != core_count) {
    bad(ErrorCode::CoreCountMismatch,
        fmt::format("{} core columns, run declares {}", s.cpu_core_util.size(),
                    core_count));
  }
  for (std::size_t c = 0; c < s.cpu_core_util.size(); ++c) {
    if (!is_fraction(s.cpu_core_util[c])) {
      bad(ErrorCode::UtilizationOutOfRange,
          fmt::format("core {} utilization {} outside [0,1]", c,
                      s.cpu_core_util[c]));
    }
  }
  if (!is_fraction(s.gpu_util)) {
    bad(ErrorCode::UtilizationOutOfRange,
        fmt::format("gpu utilization {} outside [0,1]", s.gpu_util));
  }
  for (Rail r : kAllRails) {
    if (!is_power(s.power_mw(r))) {
      bad(ErrorCode::NegativePower,
          fmt::format("{} power {} mW is negative", to_string(r),
                      s.power_mw(r)));
    }
  }
}

}  // namespace

ValidationResult validate_run(RunMeta meta, std::vector<OpEvent> ops,
                              std::vector<TelemetrySample> samples,
                              std::optional<MemoryBreakdown> memory) {
  ValidationResult result;
  auto& diags = result.diagnostics;

  check_meta(meta, diags);
  if (samples.empty()) {
    diags.push_back({Severity::error, ErrorCode::EmptyTrace,
                     "run has no telemetry samples"});
  }
  if (ops.empty()) {
    diags.push_back(
        {Severity::error, ErrorCode::EmptyTrace, "run has no op events"});
  }
  for (std::size_t i = 0; i < ops.size(); ++i) check_op(ops[i], i, diags);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check_sample(samples[i], i, meta.core_count, diags);
  }

  std::stable_sort(samples.begin(), samples.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  std::stable_sort(ops.begin(), ops.end(), [](const auto& a, const auto& b) {
    return a.start < b.start;
  });

  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].t == samples[i - 1].t) {
      diags.push_back({Severity::warning, ErrorCode::ClockSkew,
                       fmt::format("duplicate sample timestamp {}",
                                   samples[i].t.micros)});
    }
  }

  if (memory && !samples.empty()) {
    std::uint64_t peak = 0;
    for (const auto& s : samples) peak = std::max(peak, s.mem_used_bytes);
    if (!memory->consistent_with_peak(peak)) {
      diags.push_back(
          {Severity::error, ErrorCode::InconsistentMemoryBreakdown,
           fmt::format("breakdown total {} exceeds peak {} + slack {}",
                       *memory->total(), peak, memory->workspace_slack_bytes)});
    }
  }

  if (!has_errors(diags)) {
    result.run = Run{std::move(meta), std::move(ops), std::move(samples),
                     std::move(memory)};
  }
  return result;
}

ValidationResult validate_run(const Run& run) {
  return validate_run(run.meta, run.ops, run.samples, run.memory_breakdown);
}

}  // namespace stepscope
