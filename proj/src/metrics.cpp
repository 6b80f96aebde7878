#include "stepscope/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "stepscope/correlate.hpp"

namespace stepscope::metrics {
namespace {

// mW * us -> J
constexpr double kJoulesPerMilliwattMicrosecond = 1e-9;

std::int64_t sample_dt(const Run& run, std::size_t i) {
  if (i + 1 < run.samples.size()) {
    return run.samples[i + 1].t - run.samples[i].t;
  }
  return run.meta.sample_interval_us;
}

void require_samples(const SampleWindow& w) {
  if (w.empty() || w.total_us() <= 0) {
    throw AnalysisError(ErrorCode::NoSamplesInWindow,
                        "analysis window holds no samples");
  }
}

template <typename Value>
double weighted_mean(const Run& run, const SampleWindow& w, Value&& value) {
  require_samples(w);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < w.indices.size(); ++k) {
    const double dt = static_cast<double>(w.dt_us[k]);
    num += value(run.samples[w.indices[k]]) * dt;
    den += dt;
  }
  return num / den;
}

void check_core(const Run& run, std::size_t core) {
  if (core >= static_cast<std::size_t>(run.meta.core_count)) {
    throw std::out_of_range(fmt::format("core {} >= core_count {}", core,
                                        run.meta.core_count));
  }
}

}  // namespace

std::int64_t SampleWindow::total_us() const {
  return std::accumulate(dt_us.begin(), dt_us.end(), std::int64_t{0});
}

SampleWindow full_window(const Run& run) {
  SampleWindow w;
  w.indices.resize(run.samples.size());
  w.dt_us.resize(run.samples.size());
  for (std::size_t i = 0; i < run.samples.size(); ++i) {
    w.indices[i] = i;
    w.dt_us[i] = sample_dt(run, i);
  }
  return w;
}

SampleWindow time_window(const Run& run, Timestamp from, Timestamp to) {
  SampleWindow w;
  auto lo = std::lower_bound(
      run.samples.begin(), run.samples.end(), from,
      [](const TelemetrySample& s, Timestamp t) { return s.t < t; });
  for (auto it = lo; it != run.samples.end() && it->t < to; ++it) {
    auto i = static_cast<std::size_t>(it - run.samples.begin());
    w.indices.push_back(i);
    w.dt_us.push_back(sample_dt(run, i));
  }
  return w;
}

SampleWindow steps_window(const Run& run, std::span<const StepWindow> windows,
                          bool include_warmup) {
  SampleWindow w;
  for (const auto& step : windows) {
    if (step.is_warmup && !include_warmup) continue;
    auto part = time_window(run, step.start, step.end);
    w.indices.insert(w.indices.end(), part.indices.begin(), part.indices.end());
    w.dt_us.insert(w.dt_us.end(), part.dt_us.begin(), part.dt_us.end());
  }
  return w;
}

double cpu_core_utilization(const Run& run, const SampleWindow& w,
                            std::size_t core) {
  check_core(run, core);
  return weighted_mean(run, w, [core](const TelemetrySample& s) {
    return s.cpu_core_util[core];
  });
}

double cpu_avg_utilization(const Run& run, const SampleWindow& w) {
  require_samples(w);
  double sum = 0.0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(run.meta.core_count);
       ++c) {
    sum += cpu_core_utilization(run, w, c);
  }
  return sum / static_cast<double>(run.meta.core_count);
}

double gpu_utilization(const Run& run, const SampleWindow& w) {
  return weighted_mean(run, w,
                       [](const TelemetrySample& s) { return s.gpu_util; });
}

double idle_ratio(const Run& run, const SampleWindow& w, std::size_t core,
                  double threshold) {
  check_core(run, core);
  return weighted_mean(run, w, [core, threshold](const TelemetrySample& s) {
    return s.cpu_core_util[core] <= threshold ? 1.0 : 0.0;
  });
}

double energy_joules(const Run& run, const SampleWindow& w, Rail rail) {
  require_samples(w);
  double sum = 0.0;
  for (std::size_t k = 0; k < w.indices.size(); ++k) {
    sum += static_cast<double>(w.dt_us[k]) *
           run.samples[w.indices[k]].power_mw(rail);
  }
  return sum * kJoulesPerMilliwattMicrosecond;
}

double mean_power_mw(const Run& run, const SampleWindow& w, Rail rail) {
  return weighted_mean(
      run, w, [rail](const TelemetrySample& s) { return s.power_mw(rail); });
}

std::uint64_t peak_memory(const Run& run) {
  std::uint64_t peak = 0;
  for (const auto& s : run.samples) peak = std::max(peak, s.mem_used_bytes);
  return peak;
}

double throughput(std::int64_t batch_size,
                  std::span<const StepWindow> windows) {
  std::int64_t steps = 0;
  std::int64_t total_us = 0;
  for (const auto& w : windows) {
    if (w.is_warmup) continue;
    ++steps;
    total_us += w.duration_us();
  }
  if (steps == 0 || total_us <= 0) {
    throw AnalysisError(ErrorCode::NoCompleteSteps,
                        "no complete non-warmup steps");
  }
  return static_cast<double>(batch_size) * static_cast<double>(steps) * 1e6 /
         static_cast<double>(total_us);
}

std::vector<RailShare> power_dominance(const Run& run, const SampleWindow& w) {
  const double sys = mean_power_mw(run, w, Rail::sys);
  std::vector<RailShare> out;
  for (Rail r : kComponentRails) {
    RailShare share{r, mean_power_mw(run, w, r), std::nullopt};
    if (sys > 0.0) share.share_of_sys = share.mean_mw / sys;
    out.push_back(share);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RailShare& a, const RailShare& b) {
                     return a.mean_mw > b.mean_mw;
                   });
  return out;
}

std::optional<double> MetricReport::energy_per_step_joules(Rail rail) const {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& s : per_step) {
    if (s.is_warmup) continue;
    auto it = s.energy_by_rail_joules.find(rail);
    if (it == s.energy_by_rail_joules.end()) continue;
    sum += it->second;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

MetricReport build_report(const Run& run, std::span<const StepWindow> windows,
                          const ReportOptions& options) {
  MetricReport r;
  r.run_id = run.meta.run_id;
  r.batch_size = run.meta.batch_size;
  r.core_count = run.meta.core_count;
  r.sample_interval_us = run.meta.sample_interval_us;
  r.warmup_steps = run.meta.warmup_steps;
  r.idle_threshold = options.idle_threshold;
  r.steps.assign(windows.begin(), windows.end());

  ErrorCollector errors;
  const SampleWindow window = steps_window(run, windows);
  r.analysis_window_us = window.total_us();
  r.analysis_sample_count = static_cast<std::int64_t>(window.indices.size());

  errors.attempt([&] {
    const auto cores = static_cast<std::size_t>(run.meta.core_count);
    for (std::size_t c = 0; c < cores; ++c) {
      r.per_core_util.push_back(cpu_core_utilization(run, window, c));
      r.idle_ratio_per_core.push_back(
          idle_ratio(run, window, c, options.idle_threshold));
    }
    double sum = 0.0;
    for (double u : r.per_core_util) sum += u;
    r.cpu_avg_util = sum / static_cast<double>(cores);
    r.gpu_util = gpu_utilization(run, window);
    for (Rail rail : kAllRails) {
      r.energy_by_rail_joules[rail] = energy_joules(run, window, rail);
    }
    r.power_ranking = power_dominance(run, window);
  });
  errors.attempt([&] {
    r.throughput_samples_per_sec = throughput(run.meta.batch_size, windows);
  });
  errors.rethrow();

  r.peak_mem_bytes = peak_memory(run);
  r.memory_breakdown = run.memory_breakdown;
  r.busy_cpu_us = correlate::busy_time(run, Device::CPU);
  r.busy_gpu_us = correlate::busy_time(run, Device::GPU);
  r.concurrent_ops = correlate::has_concurrent_ops(run);

  for (const auto& step : windows) {
    StepMetrics m;
    m.step_id = step.step_id;
    m.is_warmup = step.is_warmup;
    m.start = step.start;
    m.end = step.end;
    auto sw = time_window(run, step.start, step.end);
    m.sample_count = static_cast<std::int64_t>(sw.indices.size());
    if (!sw.empty() && sw.total_us() > 0) {
      m.cpu_avg_util = cpu_avg_utilization(run, sw);
      m.gpu_util = gpu_utilization(run, sw);
      for (Rail rail : kAllRails) {
        m.energy_by_rail_joules[rail] = energy_joules(run, sw, rail);
      }
      std::uint64_t peak = 0;
      for (std::size_t i : sw.indices) {
        peak = std::max(peak, run.samples[i].mem_used_bytes);
      }
      m.peak_mem_bytes = peak;
    }
    r.per_step.push_back(std::move(m));
  }

  std::map<std::string, std::set<std::size_t>> samples_by_op;
  for (const auto& op : run.ops) {
    auto& agg = r.per_op[op.op_name];
    ++agg.count;
    agg.total_busy_us += op.duration_us();
    samples_by_op[op.op_name];
  }
  for (const auto& a : correlate::attribute_samples(run, windows)) {
    for (std::size_t oi : a.op_indices) {
      samples_by_op[run.ops[oi].op_name].insert(a.sample_index);
    }
  }
  for (auto& [name, set] : samples_by_op) {
    r.per_op[name].attributed_samples = static_cast<std::int64_t>(set.size());
  }
  return r;
}

}  // namespace stepscope::metrics
