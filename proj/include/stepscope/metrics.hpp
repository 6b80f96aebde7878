// Run-level metrics over an analysis window of telemetry samples.
//
// Each sample i carries weight dt_i, the gap to the next sample in the run
// (the last sample of the run uses the nominal sampling interval). A window
// is a subset of samples keeping those weights, so sums over adjacent
// windows add up exactly. Utilization, energy and power ranking use the
// non-warmup step windows; peak memory uses the whole run.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepscope/steps.hpp"
#include "stepscope/trace_model.hpp"

namespace stepscope::metrics {

struct SampleWindow {
  std::vector<std::size_t> indices;  // into run.samples, ascending
  std::vector<std::int64_t> dt_us;   // weight of each selected sample

  bool empty() const { return indices.empty(); }
  std::int64_t total_us() const;
};

SampleWindow full_window(const Run& run);
/// Samples with t in [from, to).
SampleWindow time_window(const Run& run, Timestamp from, Timestamp to);
/// Samples inside any of `windows`, skipping warmup windows unless asked.
SampleWindow steps_window(const Run& run, std::span<const StepWindow> windows,
                          bool include_warmup = false);

double cpu_core_utilization(const Run& run, const SampleWindow& w,
                            std::size_t core);
double cpu_avg_utilization(const Run& run, const SampleWindow& w);
double gpu_utilization(const Run& run, const SampleWindow& w);
/// Share of window time with core utilization <= threshold (0 means exactly
/// idle).
double idle_ratio(const Run& run, const SampleWindow& w, std::size_t core,
                  double threshold = 0.0);
/// Rectangle-rule energy in joules: sum of dt_i * P_i.
double energy_joules(const Run& run, const SampleWindow& w, Rail rail);
/// Time-weighted mean power of a rail, in milliwatts.
double mean_power_mw(const Run& run, const SampleWindow& w, Rail rail);
/// Maximum sampled memory over the full run, warmup included.
std::uint64_t peak_memory(const Run& run);
/// batch * steps / summed step seconds over non-warmup windows.
double throughput(std::int64_t batch_size, std::span<const StepWindow> windows);

struct RailShare {
  Rail rail = Rail::cpu;
  double mean_mw = 0.0;
  std::optional<double> share_of_sys;  // absent when mean sys power is 0

  bool operator==(const RailShare&) const = default;
};

/// Component rails by mean power, highest first; ties keep cpu, gpu, mem
/// order.
std::vector<RailShare> power_dominance(const Run& run, const SampleWindow& w);

struct StepMetrics {
  std::int64_t step_id = 0;
  bool is_warmup = false;
  Timestamp start;
  Timestamp end;
  std::int64_t sample_count = 0;
  std::optional<double> cpu_avg_util;
  std::optional<double> gpu_util;
  std::map<Rail, double> energy_by_rail_joules;  // empty when no samples
  std::optional<std::uint64_t> peak_mem_bytes;

  bool operator==(const StepMetrics&) const = default;
};

struct OpAggregate {
  std::int64_t count = 0;
  std::int64_t total_busy_us = 0;      // sum of instance durations
  std::int64_t attributed_samples = 0;  // distinct samples inside any instance

  bool below_sampling_resolution() const { return attributed_samples == 0; }
  bool operator==(const OpAggregate&) const = default;
};

struct ReportOptions {
  double idle_threshold = 0.0;
};

struct MetricReport {
  std::string run_id;
  std::int64_t batch_size = 0;
  std::int64_t core_count = 0;
  std::int64_t sample_interval_us = 0;
  std::int64_t warmup_steps = 0;
  double idle_threshold = 0.0;

  std::vector<double> per_core_util;
  double cpu_avg_util = 0.0;
  double gpu_util = 0.0;
  std::vector<double> idle_ratio_per_core;
  std::map<Rail, double> energy_by_rail_joules;
  std::uint64_t peak_mem_bytes = 0;
  std::optional<MemoryBreakdown> memory_breakdown;
  double throughput_samples_per_sec = 0.0;
  std::vector<RailShare> power_ranking;

  std::int64_t analysis_window_us = 0;
  std::int64_t analysis_sample_count = 0;
  std::int64_t busy_cpu_us = 0;
  std::int64_t busy_gpu_us = 0;
  bool concurrent_ops = false;  // per-op attributions double count

  std::vector<StepWindow> steps;
  std::vector<StepMetrics> per_step;
  std::map<std::string, OpAggregate> per_op;
  std::optional<steps::PeriodEstimate> period;
  std::optional<steps::PredictabilityScore> predictability;

  /// Mean per-step energy on `rail` over non-warmup steps that hold samples.
  std::optional<double> energy_per_step_joules(Rail rail) const;
  bool operator==(const MetricReport&) const = default;
};

/// Aggregates every metric for a run with resolved step windows. Failures of
/// the individual metrics are collected into one AnalysisError.
MetricReport build_report(const Run& run, std::span<const StepWindow> windows,
                          const ReportOptions& options = {});

}  // namespace stepscope::metrics
