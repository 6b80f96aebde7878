// Training-step windows and cross-step periodicity.
//
// Steps come from explicit op step ids when the trace carries them. Otherwise
// the dominant period of a telemetry signal is estimated by autocorrelation
// and the run is tiled with windows of that length.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "stepscope/trace_model.hpp"

namespace stepscope::steps {

enum class Signal { gpu_util, cpu_avg_util, power_sys };

std::string_view to_string(Signal s);
std::optional<Signal> signal_from_string(std::string_view s);

enum class PeriodMethod { explicit_labels, autocorrelation };

std::string_view to_string(PeriodMethod m);
std::optional<PeriodMethod> period_method_from_string(std::string_view s);

struct PeriodEstimate {
  std::int64_t period_us = 0;
  double confidence = 0.0;  // in [0,1]
  PeriodMethod method = PeriodMethod::autocorrelation;

  bool operator==(const PeriodEstimate&) const = default;
};

struct PredictabilityScore {
  Signal signal = Signal::gpu_util;
  double mean_pairwise_correlation = 0.0;  // in [-1,1]
  std::int64_t per_step_pairs = 0;

  bool operator==(const PredictabilityScore&) const = default;
};

/// Minimum autocorrelation accepted for an inferred period.
inline constexpr double kMinPeriodConfidence = 0.5;
/// Fewest resampled points detect_period will work with.
inline constexpr std::size_t kMinSignalSamples = 8;

double signal_value(const TelemetrySample& s, Signal signal);

/// The signal linearly resampled onto t0, t0+interval, ... up to the last
/// sample time.
std::vector<double> resample_uniform(const Run& run, Signal signal);

/// Normalized autocorrelation of `x` at `lag`: the Pearson correlation of
/// x[0, n-lag) with x[lag, n). Zero when either segment is constant.
double autocorrelation(std::span<const double> x, std::size_t lag);

/// Dominant period of an already-uniform series, in samples (fractional
/// after parabolic peak refinement), plus the peak autocorrelation.
struct LagEstimate {
  double lag = 0.0;
  double peak = 0.0;
};
LagEstimate dominant_lag(std::span<const double> x);

PeriodEstimate detect_period(const Run& run, Signal signal = Signal::gpu_util);

/// Windows from explicit step ids, or from tiling by the detected period.
/// The first meta.warmup_steps windows are flagged as warmup.
std::vector<StepWindow> resolve_steps(const Run& run,
                                      Signal signal = Signal::gpu_util,
                                      PeriodEstimate* period_out = nullptr);

/// Mean pairwise Pearson correlation of the per-step signal over the
/// non-warmup windows, each resampled to the shortest step's sample count.
PredictabilityScore predictability(const Run& run,
                                   std::span<const StepWindow> windows,
                                   Signal signal = Signal::gpu_util);

/// Pearson correlation. Two constant series correlate as 1 when equal and 0
/// otherwise.
double pearson(std::span<const double> a, std::span<const double> b);

/// Linear resampling of `x` to `n` points spanning the same index range.
std::vector<double> resample_linear(std::span<const double> x, std::size_t n);

}  // namespace stepscope::steps
