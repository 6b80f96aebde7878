#include "stepscope/steps.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include <fmt/format.h>


namespace stepscope::steps {

std::string_view to_string(Signal s) {
  switch (s) {
    case Signal::gpu_util: return "gpu_util";
    case Signal::cpu_avg_util: return "cpu_avg_util";
    case Signal::power_sys: return "power_sys";
  }
  return "?";
}

std::optional<Signal> signal_from_string(std::string_view s) {
  for (Signal v : {Signal::gpu_util, Signal::cpu_avg_util, Signal::power_sys}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::string_view to_string(PeriodMethod m) {
  switch (m) {
    case PeriodMethod::explicit_labels: return "explicit";
    case PeriodMethod::autocorrelation: return "autocorrelation";
  }
  return "?";
}

std::optional<PeriodMethod> period_method_from_string(std::string_view s) {
  if (s == "explicit") return PeriodMethod::explicit_labels;
  if (s == "autocorrelation") return PeriodMethod::autocorrelation;
  return std::nullopt;
}

double signal_value(const TelemetrySample& s, Signal signal) {
  switch (signal) {
    case Signal::gpu_util: return s.gpu_util;
    case Signal::cpu_avg_util: return s.cpu_mean_util();
    case Signal::power_sys: return s.power_sys_mw;
  }
  return 0.0;
}

std::vector<double> resample_uniform(const Run& run, Signal signal) {
  const auto& samples = run.samples;
  std::vector<double> out;
  if (samples.empty()) return out;
  const std::int64_t t0 = samples.front().t.micros;
  const std::int64_t t1 = samples.back().t.micros;
  const std::int64_t step = run.meta.sample_interval_us;
  out.reserve(static_cast<std::size_t>((t1 - t0) / step + 1));

  std::size_t j = 0;  // samples[j].t <= t < samples[j+1].t
  for (std::int64_t t = t0; t <= t1; t += step) {
    while (j + 1 < samples.size() && samples[j + 1].t.micros <= t) ++j;
    double v = signal_value(samples[j], signal);
    if (samples[j].t.micros == t || j + 1 == samples.size()) {
      out.push_back(v);
      continue;
    }
    double v1 = signal_value(samples[j + 1], signal);
    double span = static_cast<double>(samples[j + 1].t.micros -
                                      samples[j].t.micros);
    double frac = static_cast<double>(t - samples[j].t.micros) / span;
    out.push_back(v + (v1 - v) * frac);
  }
  return out;
}

double autocorrelation(std::span<const double> x, std::size_t lag) {
  if (lag >= x.size()) return 0.0;
  auto head = x.subspan(0, x.size() - lag);
  auto tail = x.subspan(lag);
  auto constant = [](std::span<const double> v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) ==
           v.end();
  };
  if (constant(head) || constant(tail)) return 0.0;
  return pearson(head, tail);
}

LagEstimate dominant_lag(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < kMinSignalSamples) {
    throw AnalysisError(ErrorCode::SignalTooShort,
                        fmt::format("{} samples; need at least {}", n,
                                    kMinSignalSamples));
  }
  const std::size_t max_lag = n / 2;
  std::vector<double> r(max_lag + 2, 0.0);
  for (std::size_t lag = 1; lag <= max_lag + 1 && lag < n; ++lag) {
    r[lag] = autocorrelation(x, lag);
  }

  // Every multiple of the true period scores close to the maximum, so noise
  // alone decides among them. Take the smallest local peak that reaches
  // kHarmonicRatio of the global maximum instead.
  constexpr double kTieTolerance = 1e-9;
  constexpr double kHarmonicRatio = 0.9;
  std::size_t global = 2;
  for (std::size_t lag = 3; lag <= max_lag; ++lag) {
    if (r[lag] > r[global] + kTieTolerance) global = lag;
  }
  std::size_t best = global;
  if (r[global] > 0.0) {
    for (std::size_t lag = 2; lag < global; ++lag) {
      bool peak = r[lag] + kTieTolerance >= r[lag - 1] &&
                  r[lag] + kTieTolerance >= r[lag + 1];
      if (peak && r[lag] >= kHarmonicRatio * r[global]) {
        best = lag;
        break;
      }
    }
  }
  LagEstimate est{static_cast<double>(best), r[best]};

  // A perfect match means the signal repeats exactly at an integer lag.
  if (r[best] >= 1.0) return est;
  double left = r[best - 1], mid = r[best], right = r[best + 1];
  double denom = left - 2.0 * mid + right;
  if (denom < 0.0) {
    double offset = 0.5 * (left - right) / denom;
    est.lag += std::clamp(offset, -0.5, 0.5);
  }
  return est;
}

namespace {

struct RawPeriod {
  PeriodEstimate estimate;
  double period_us = 0.0;  // unrounded
};

RawPeriod estimate_period(const Run& run, Signal signal) {
  auto grid = resample_uniform(run, signal);
  auto lag = dominant_lag(grid);
  RawPeriod out;
  out.period_us = lag.lag * static_cast<double>(run.meta.sample_interval_us);
  out.estimate.method = PeriodMethod::autocorrelation;
  out.estimate.confidence = std::clamp(lag.peak, 0.0, 1.0);
  out.estimate.period_us =
      std::max<std::int64_t>(1, std::llround(out.period_us));
  return out;
}

}  // namespace

PeriodEstimate detect_period(const Run& run, Signal signal) {
  return estimate_period(run, signal).estimate;
}

namespace {

void flag_warmup(std::vector<StepWindow>& windows, std::int64_t warmup) {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    windows[i].is_warmup = static_cast<std::int64_t>(i) < warmup;
  }
}

std::vector<StepWindow> explicit_windows(const Run& run) {
  std::map<std::int64_t, StepWindow> by_id;
  for (const auto& op : run.ops) {
    if (!op.step_id) continue;
    auto [it, inserted] =
        by_id.try_emplace(*op.step_id, StepWindow{*op.step_id, op.start, op.end});
    if (!inserted) {
      it->second.start = std::min(it->second.start, op.start);
      it->second.end = std::max(it->second.end, op.end);
    }
  }
  std::vector<StepWindow> windows;
  windows.reserve(by_id.size());
  for (auto& [id, w] : by_id) windows.push_back(w);
  for (std::size_t i = 1; i < windows.size(); ++i) {
    const auto& prev = windows[i - 1];
    const auto& cur = windows[i];
    if (cur.start <= prev.start || cur.start < prev.end) {
      throw AnalysisError(
          ErrorCode::OverlappingSteps,
          fmt::format("step {} [{}, {}) overlaps or precedes step {} [{}, {})",
                      cur.step_id, cur.start.micros, cur.end.micros,
                      prev.step_id, prev.start.micros, prev.end.micros));
    }
  }
  return windows;
}

}  // namespace

std::vector<StepWindow> resolve_steps(const Run& run, Signal signal,
                                      PeriodEstimate* period_out) {
  bool labeled = std::any_of(run.ops.begin(), run.ops.end(),
                             [](const OpEvent& op) { return op.step_id; });
  std::vector<StepWindow> windows;
  if (labeled) {
    windows = explicit_windows(run);
    if (period_out) {
      // Mean step length, preferring non-warmup steps when there are any.
      auto first = std::min<std::size_t>(
          static_cast<std::size_t>(run.meta.warmup_steps), windows.size());
      if (first == windows.size()) first = 0;
      std::int64_t total = 0;
      for (std::size_t i = first; i < windows.size(); ++i) {
        total += windows[i].duration_us();
      }
      auto count = static_cast<std::int64_t>(windows.size() - first);
      period_out->method = PeriodMethod::explicit_labels;
      period_out->confidence = 1.0;
      period_out->period_us = std::max<std::int64_t>(
          1, std::llround(static_cast<double>(total) /
                          static_cast<double>(count)));
    }
  } else {
    RawPeriod raw;
    try {
      raw = estimate_period(run, signal);
    } catch (const AnalysisError& e) {
      throw AnalysisError(ErrorCode::NoSteps,
                          fmt::format("no step ids and {}", e.what()));
    }
    const PeriodEstimate& est = raw.estimate;
    if (est.confidence < kMinPeriodConfidence) {
      throw AnalysisError(
          ErrorCode::NoSteps,
          fmt::format("no step ids and period confidence {:.3f} < {}",
                      est.confidence, kMinPeriodConfidence));
    }
    // Tile with the unrounded period so long runs do not drift.
    const double period = raw.period_us;
    const std::int64_t origin = run.ops.front().start.micros;
    const std::int64_t finish = run.finish().micros;
    for (std::int64_t k = 0;; ++k) {
      std::int64_t s = origin + std::llround(static_cast<double>(k) * period);
      std::int64_t e =
          origin + std::llround(static_cast<double>(k + 1) * period);
      if (e > finish) break;
      windows.push_back(StepWindow{k, Timestamp{s}, Timestamp{e}, false});
    }
    if (windows.empty()) {
      throw AnalysisError(ErrorCode::NoSteps,
                          "detected period longer than the run");
    }
    if (period_out) *period_out = est;
  }
  flag_warmup(windows, run.meta.warmup_steps);
  return windows;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n == 0) return 0.0;
  if (std::equal(a.begin(), a.begin() + n, b.begin())) return 1.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::vector<double> resample_linear(std::span<const double> x, std::size_t n) {
  if (n == x.size()) return {x.begin(), x.end()};
  std::vector<double> out(n);
  if (x.empty()) return out;
  if (n == 1 || x.size() == 1) {
    std::fill(out.begin(), out.end(), x.front());
    return out;
  }
  const double scale =
      static_cast<double>(x.size() - 1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    double pos = static_cast<double>(i) * scale;
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= x.size() - 1) {
      out[i] = x.back();
      continue;
    }
    double frac = pos - static_cast<double>(lo);
    out[i] = x[lo] + (x[lo + 1] - x[lo]) * frac;
  }
  return out;
}

PredictabilityScore predictability(const Run& run,
                                   std::span<const StepWindow> windows,
                                   Signal signal) {
  std::vector<std::vector<double>> per_step;
  for (const auto& w : windows) {
    if (w.is_warmup) continue;
    auto lo = std::lower_bound(
        run.samples.begin(), run.samples.end(), w.start,
        [](const TelemetrySample& s, Timestamp t) { return s.t < t; });
    std::vector<double> values;
    for (auto it = lo; it != run.samples.end() && it->t < w.end; ++it) {
      values.push_back(signal_value(*it, signal));
    }
    per_step.push_back(std::move(values));
  }
  if (per_step.size() < 2) {
    throw AnalysisError(ErrorCode::NoCompleteSteps,
                        fmt::format("{} non-warmup steps; need at least 2",
                                    per_step.size()));
  }
  std::size_t len = per_step.front().size();
  for (const auto& v : per_step) len = std::min(len, v.size());
  if (len < 2) {
    throw AnalysisError(ErrorCode::SignalTooShort,
                        "shortest step holds fewer than 2 samples");
  }
  for (auto& v : per_step) v = resample_linear(v, len);

  double sum = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < per_step.size(); ++i) {
    for (std::size_t j = i + 1; j < per_step.size(); ++j) {
      sum += pearson(per_step[i], per_step[j]);
      ++pairs;
    }
  }
  return {signal, sum / static_cast<double>(pairs), pairs};
}

}  // namespace stepscope::steps
