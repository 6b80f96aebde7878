// Shared fixtures and independent reference implementations for the tests.
// The oracles deliberately avoid the library's algorithms: plain loops over
// every (sample, op) pair, a 1 us boolean timeline, and direct sums.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepscope/trace_model.hpp"

namespace stepscope::testing {

inline TelemetrySample make_sample(std::int64_t t_us, std::vector<double> cores,
                                   double gpu = 0.0, double p_cpu = 0.0,
                                   double p_gpu = 0.0, double p_mem = 0.0,
                                   double p_sys = 0.0, std::uint64_t mem = 0) {
  TelemetrySample s;
  s.t = Timestamp{t_us};
  s.cpu_core_util = std::move(cores);
  s.gpu_util = gpu;
  s.power_cpu_mw = p_cpu;
  s.power_gpu_mw = p_gpu;
  s.power_mem_mw = p_mem;
  s.power_sys_mw = p_sys;
  s.mem_used_bytes = mem;
  return s;
}

inline OpEvent make_op(std::string name, Device d, std::int64_t start,
                       std::int64_t end,
                       std::optional<std::int64_t> step = std::nullopt) {
  OpEvent op;
  op.op_name = std::move(name);
  op.device = d;
  op.step_id = step;
  op.start = Timestamp{start};
  op.end = Timestamp{end};
  return op;
}

inline RunMeta make_meta(std::int64_t cores = 1, std::int64_t interval = 10'000,
                         std::int64_t warmup = 0, std::int64_t batch = 1) {
  RunMeta m;
  m.run_id = "fixture";
  m.core_count = cores;
  m.sample_interval_us = interval;
  m.warmup_steps = warmup;
  m.batch_size = batch;
  return m;
}

/// Validated run; throws if the fixture itself is invalid.
inline Run make_run(RunMeta meta, std::vector<OpEvent> ops,
                    std::vector<TelemetrySample> samples) {
  auto res = validate_run(std::move(meta), std::move(ops), std::move(samples));
  if (!res.run) {
    std::string msg = "invalid fixture:";
    for (const auto& d : res.diagnostics) msg += " " + d.render();
    throw std::runtime_error(msg);
  }
  return std::move(*res.run);
}

/// One op spanning the whole run and `n` samples on a uniform grid, carrying
/// `values` as the gpu and core 0 utilization and as every power rail.
inline Run series_run(const std::vector<double>& util,
                      const std::vector<double>& power_mw,
                      std::int64_t interval = 10'000) {
  std::vector<TelemetrySample> samples;
  for (std::size_t i = 0; i < util.size(); ++i) {
    double p = power_mw.empty() ? 0.0 : power_mw[i];
    samples.push_back(make_sample(static_cast<std::int64_t>(i) * interval,
                                  {util[i]}, util[i], p, p, p, p));
  }
  auto total = static_cast<std::int64_t>(util.size()) * interval;
  return make_run(make_meta(1, interval),
                  {make_op("op", Device::GPU, 0, total)}, std::move(samples));
}

// ---- oracles ---------------------------------------------------------------

/// For each sample, every op index whose [start, end) contains it.
inline std::vector<std::vector<std::size_t>> brute_force_attribution(
    const Run& run) {
  std::vector<std::vector<std::size_t>> out(run.samples.size());
  for (std::size_t s = 0; s < run.samples.size(); ++s) {
    for (std::size_t o = 0; o < run.ops.size(); ++o) {
      if (run.ops[o].start <= run.samples[s].t && run.samples[s].t < run.ops[o].end) {
        out[s].push_back(o);
      }
    }
  }
  return out;
}

/// Marks every covered microsecond on a boolean timeline.
inline std::int64_t timeline_busy(const Run& run, Device device) {
  std::int64_t lo = INT64_MAX, hi = 0;
  for (const auto& op : run.ops) {
    if (op.device != device) continue;
    lo = std::min(lo, op.start.micros);
    hi = std::max(hi, op.end.micros);
  }
  if (hi <= lo) return 0;
  std::vector<char> mark(static_cast<std::size_t>(hi - lo), 0);
  for (const auto& op : run.ops) {
    if (op.device != device) continue;
    for (auto t = op.start.micros; t < op.end.micros; ++t) {
      mark[static_cast<std::size_t>(t - lo)] = 1;
    }
  }
  return std::count(mark.begin(), mark.end(), 1);
}

/// Rectangle sum over samples of a sorted series: each sample holds until the
/// next one, the last for `interval`. Returns joules.
inline double rectangle_energy(const std::vector<std::int64_t>& t,
                               const std::vector<double>& p_mw,
                               std::int64_t interval, std::size_t from = 0,
                               std::size_t to = SIZE_MAX) {
  to = std::min(to, t.size());
  double j = 0.0;
  for (std::size_t i = from; i < to; ++i) {
    double dt = i + 1 < t.size() ? static_cast<double>(t[i + 1] - t[i])
                                 : static_cast<double>(interval);
    j += p_mw[i] * 1e-3 * dt * 1e-6;
  }
  return j;
}

inline double weighted_mean(const std::vector<std::int64_t>& t,
                            const std::vector<double>& v, std::int64_t interval) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double dt = i + 1 < t.size() ? static_cast<double>(t[i + 1] - t[i])
                                 : static_cast<double>(interval);
    num += v[i] * dt;
    den += dt;
  }
  return num / den;
}

inline bool rel_close(double a, double b, double rel) {
  double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) <= rel * scale;
}

/// A random run with up to `max_ops` ops of mixed devices, possibly
/// overlapping, and jittered sample timestamps.
inline Run random_run(std::mt19937_64& rng, std::size_t max_ops = 1000) {
  std::uniform_int_distribution<std::size_t> nops(1, max_ops);
  std::uniform_int_distribution<std::int64_t> start(0, 200'000);
  std::uniform_int_distribution<std::int64_t> len(1, 20'000);
  std::uniform_int_distribution<int> dev(0, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<OpEvent> ops;
  std::size_t n = nops(rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto s = start(rng);
    ops.push_back(make_op("op" + std::to_string(i % 17),
                          dev(rng) ? Device::GPU : Device::CPU, s, s + len(rng)));
  }
  std::uniform_int_distribution<std::int64_t> gap(1, 2'000);
  std::vector<TelemetrySample> samples;
  for (std::int64_t t = gap(rng) - 1; t < 230'000; t += gap(rng)) {
    samples.push_back(make_sample(t, {u(rng), u(rng)}, u(rng), 1000 * u(rng),
                                  1000 * u(rng), 1000 * u(rng), 4000 * u(rng)));
  }
  return make_run(make_meta(2, 1'000), std::move(ops), std::move(samples));
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "stepscope-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace stepscope::testing
