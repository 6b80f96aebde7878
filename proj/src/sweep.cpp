#include "stepscope/sweep.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace stepscope::sweep {

std::string_view to_string(Scaling s) {
  switch (s) {
    case Scaling::sub_proportional: return "sub_proportional";
    case Scaling::proportional: return "proportional";
    case Scaling::super_proportional: return "super_proportional";
  }
  return "?";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::fits: return "fits";
    case Verdict::out_of_memory: return "out_of_memory";
  }
  return "?";
}

std::optional<Scaling> scaling_from_string(std::string_view s) {
  for (Scaling v : {Scaling::sub_proportional, Scaling::proportional,
                    Scaling::super_proportional}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::optional<Verdict> verdict_from_string(std::string_view s) {
  for (Verdict v : {Verdict::fits, Verdict::out_of_memory}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::vector<SweepPoint> sorted_points(std::vector<SweepPoint> points) {
  std::stable_sort(points.begin(), points.end(),
                   [](const SweepPoint& a, const SweepPoint& b) {
                     return a.batch_size < b.batch_size;
                   });
  return points;
}

namespace {

std::pair<const SweepPoint*, const SweepPoint*> endpoints(
    std::span<const SweepPoint> points) {
  if (points.size() < 2) {
    throw AnalysisError(ErrorCode::UsageError,
                        fmt::format("sweep needs at least 2 runs, got {}",
                                    points.size()));
  }
  auto [lo, hi] = std::minmax_element(
      points.begin(), points.end(),
      [](const SweepPoint& a, const SweepPoint& b) {
        return a.batch_size < b.batch_size;
      });
  return {&*lo, &*hi};
}

}  // namespace

double throughput_speedup(std::span<const SweepPoint> points) {
  auto [lo, hi] = endpoints(points);
  double base = lo->report.throughput_samples_per_sec;
  double top = hi->report.throughput_samples_per_sec;
  if (!(base > 0.0) || !(top > 0.0)) {
    throw AnalysisError(ErrorCode::MissingThroughput,
                        "endpoint run has no throughput");
  }
  return top / base;
}

Scaling classify_scaling(double energy_ratio, double batch_ratio) {
  double rel = energy_ratio / batch_ratio;
  if (rel < 1.0 - kProportionalBand) return Scaling::sub_proportional;
  if (rel > 1.0 + kProportionalBand) return Scaling::super_proportional;
  return Scaling::proportional;
}

EnergyScaling energy_scaling(std::span<const SweepPoint> points, Rail rail) {
  auto [lo, hi] = endpoints(points);
  auto base = lo->report.energy_per_step_joules(rail);
  auto top = hi->report.energy_per_step_joules(rail);
  if (!base || !top || !(*base > 0.0)) {
    throw AnalysisError(ErrorCode::MissingEnergy,
                        fmt::format("endpoint run has no per-step {} energy",
                                    to_string(rail)));
  }
  EnergyScaling out;
  out.rail = rail;
  out.energy_ratio = *top / *base;
  out.batch_ratio = static_cast<double>(hi->batch_size) /
                    static_cast<double>(lo->batch_size);
  out.classification = classify_scaling(out.energy_ratio, out.batch_ratio);
  return out;
}

UtilSensitivity gpu_util_sensitivity(std::span<const SweepPoint> points) {
  auto [lo, hi] = endpoints(points);
  return {hi->report.gpu_util - lo->report.gpu_util,
          hi->report.cpu_avg_util - lo->report.cpu_avg_util};
}

std::vector<Feasibility> feasibility(std::span<const SweepPoint> points,
                                     std::uint64_t capacity_bytes) {
  std::vector<Feasibility> out;
  for (const auto& p : points) {
    Feasibility f;
    f.batch_size = p.batch_size;
    f.peak_mem_bytes = p.report.peak_mem_bytes;
    f.verdict = f.peak_mem_bytes < capacity_bytes ? Verdict::fits
                                                  : Verdict::out_of_memory;
    if (f.verdict == Verdict::out_of_memory) {
      f.memory_breakdown = p.report.memory_breakdown;
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::optional<std::pair<std::uint64_t, std::uint64_t>> intermediate_growth(
    std::span<const SweepPoint> points) {
  auto [lo, hi] = endpoints(points);
  const auto& a = lo->report.memory_breakdown;
  const auto& b = hi->report.memory_breakdown;
  if (!a || !b || !a->intermediate_bytes || !b->intermediate_bytes) {
    return std::nullopt;
  }
  return std::pair{*a->intermediate_bytes, *b->intermediate_bytes};
}

SweepResult build_sweep(std::string model, std::vector<SweepPoint> points,
                        std::uint64_t capacity_bytes, Rail rail) {
  SweepResult r;
  r.model = std::move(model);
  r.points = sorted_points(std::move(points));
  r.capacity_bytes = capacity_bytes;

  ErrorCollector errors;
  errors.attempt([&] { r.throughput_speedup = throughput_speedup(r.points); });
  errors.attempt([&] { r.energy_scaling = energy_scaling(r.points, rail); });
  errors.rethrow();

  r.util_sensitivity = gpu_util_sensitivity(r.points);
  r.mem_intermediate_growth = intermediate_growth(r.points);
  r.feasibility = feasibility(r.points, capacity_bytes);
  return r;
}

}  // namespace stepscope::sweep
