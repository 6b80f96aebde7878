// Synthetic runs with closed-form expected metrics.
//
// Every step is the same sequence of phases. A phase lasts a whole number of
// sampling intervals and holds constant utilization, power and memory, so
// with zero noise each metric is an exact phase-weighted sum.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stepscope/metrics.hpp"
#include "stepscope/trace_model.hpp"

namespace stepscope::synth {

struct Phase {
  std::string op_name = "op";
  Device device = Device::GPU;
  double fraction = 1.0;             // of the step duration
  std::vector<double> core_util;     // one per core
  double gpu_util = 0.0;
  double power_cpu_mw = 0.0;
  double power_gpu_mw = 0.0;
  double power_mem_mw = 0.0;
  double power_sys_mw = 0.0;
  std::uint64_t mem_bytes = 0;

  double power_mw(Rail r) const;
  bool operator==(const Phase&) const = default;
};

struct SynthSpec {
  std::string run_id = "synth";
  std::int64_t steps = 10;
  std::int64_t step_duration_us = 200'000;
  std::int64_t batch_size = 4;
  std::int64_t core_count = 6;
  std::int64_t sample_interval_us = 10'000;
  std::int64_t warmup_steps = 3;
  std::uint64_t device_mem_capacity_bytes = 8'000'000'000ULL;
  std::vector<Phase> phases;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;
  bool strip_step_ids = false;
  std::uint64_t warmup_extra_mem_bytes = 0;  // added during warmup steps
  std::optional<MemoryBreakdown> memory_breakdown;

  bool operator==(const SynthSpec&) const = default;
};

struct GroundTruth {
  std::vector<double> per_core_util;
  double cpu_avg_util = 0.0;
  double gpu_util = 0.0;
  std::vector<double> idle_ratio_per_core;
  std::map<Rail, double> mean_power_mw;
  std::map<Rail, double> energy_per_step_joules;
  std::map<Rail, double> energy_joules;  // over all non-warmup steps
  std::uint64_t peak_mem_bytes = 0;
  double throughput_samples_per_sec = 0.0;
  std::int64_t period_us = 0;
  std::int64_t step_count = 0;
  std::int64_t analysis_steps = 0;
  std::map<std::string, metrics::OpAggregate> per_op;

  bool operator==(const GroundTruth&) const = default;
};

struct SynthRun {
  Run run;
  GroundTruth truth;
};

/// Throws AnalysisError(InvalidSpec) when the spec is inconsistent.
void check_spec(const SynthSpec& spec);

/// Deterministic for a given spec, including its seed.
SynthRun generate(const SynthSpec& spec);

GroundTruth ground_truth(const SynthSpec& spec);

/// Two-phase GPU/CPU alternation: a ready-made default.
SynthSpec default_spec();

/// A random valid spec with zero noise; `seed` drives both the spec shape
/// and the spec's own seed field.
SynthSpec random_spec(std::uint64_t seed);

std::string spec_to_json(const SynthSpec& spec);
/// Throws AnalysisError(InvalidSpec) on malformed input.
SynthSpec spec_from_json(std::string_view text);
std::string truth_to_json(const GroundTruth& truth);

}  // namespace stepscope::synth
