// Cross-run comparison of one model trained at several batch sizes. All
// ratios compare the smallest-batch and largest-batch endpoints.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stepscope/metrics.hpp"

namespace stepscope::sweep {

struct SweepPoint {
  std::int64_t batch_size = 0;
  metrics::MetricReport report;

  bool operator==(const SweepPoint&) const = default;
};

enum class Scaling { sub_proportional, proportional, super_proportional };
enum class Verdict { fits, out_of_memory };

std::string_view to_string(Scaling s);
std::string_view to_string(Verdict v);
std::optional<Scaling> scaling_from_string(std::string_view s);
std::optional<Verdict> verdict_from_string(std::string_view s);

/// Relative width of the band classified as proportional.
inline constexpr double kProportionalBand = 0.05;

struct EnergyScaling {
  Rail rail = Rail::sys;
  double energy_ratio = 0.0;
  double batch_ratio = 0.0;
  Scaling classification = Scaling::proportional;

  bool operator==(const EnergyScaling&) const = default;
};

struct UtilSensitivity {
  double delta_gpu = 0.0;
  double delta_cpu = 0.0;

  bool operator==(const UtilSensitivity&) const = default;
};

struct Feasibility {
  std::int64_t batch_size = 0;
  Verdict verdict = Verdict::fits;
  std::uint64_t peak_mem_bytes = 0;
  std::optional<MemoryBreakdown> memory_breakdown;  // echoed when OOM

  bool operator==(const Feasibility&) const = default;
};

struct SweepResult {
  std::string model;
  std::vector<SweepPoint> points;  // sorted by batch size
  std::uint64_t capacity_bytes = 0;
  double throughput_speedup = 0.0;
  EnergyScaling energy_scaling;
  UtilSensitivity util_sensitivity;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> mem_intermediate_growth;
  std::vector<Feasibility> feasibility;

  bool operator==(const SweepResult&) const = default;
};

/// Stable sort by batch size.
std::vector<SweepPoint> sorted_points(std::vector<SweepPoint> points);

/// Largest-batch throughput over smallest-batch throughput.
double throughput_speedup(std::span<const SweepPoint> points);

/// Classifies an energy ratio against a batch ratio.
Scaling classify_scaling(double energy_ratio, double batch_ratio);

/// Per-step energy ratio between the batch endpoints.
EnergyScaling energy_scaling(std::span<const SweepPoint> points,
                             Rail rail = Rail::sys);

UtilSensitivity gpu_util_sensitivity(std::span<const SweepPoint> points);

/// A point fits iff its peak memory is strictly below capacity.
std::vector<Feasibility> feasibility(std::span<const SweepPoint> points,
                                     std::uint64_t capacity_bytes);

/// Intermediate-data bytes at the smallest and largest batch, when both runs
/// report them.
std::optional<std::pair<std::uint64_t, std::uint64_t>> intermediate_growth(
    std::span<const SweepPoint> points);

SweepResult build_sweep(std::string model, std::vector<SweepPoint> points,
                        std::uint64_t capacity_bytes, Rail rail = Rail::sys);

}  // namespace stepscope::sweep
