#include "stepscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

namespace stepscope::synth {
namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& msg) {
  throw AnalysisError(ErrorCode::InvalidSpec, msg);
}

/// Phase boundaries inside one step, in microseconds from the step start.
std::vector<std::int64_t> phase_bounds(const SynthSpec& spec) {
  std::vector<std::int64_t> bounds{0};
  double cumulative = 0.0;
  for (const auto& p : spec.phases) {
    cumulative += p.fraction;
    double exact = cumulative * static_cast<double>(spec.step_duration_us);
    auto rounded = std::llround(exact);
    if (std::abs(exact - static_cast<double>(rounded)) > 1e-6) {
      invalid(fmt::format("phase '{}' does not end on a whole microsecond",
                          p.op_name));
    }
    bounds.push_back(rounded);
  }
  return bounds;
}

// Uniform in [-1, 1] from the raw engine output, independent of the
// standard library's distribution implementations.
double unit_noise(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

double Phase::power_mw(Rail r) const {
  switch (r) {
    case Rail::cpu: return power_cpu_mw;
    case Rail::gpu: return power_gpu_mw;
    case Rail::mem: return power_mem_mw;
    case Rail::sys: return power_sys_mw;
  }
  return 0.0;
}

void check_spec(const SynthSpec& spec) {
  if (spec.steps < 1) invalid("steps must be >= 1");
  if (spec.sample_interval_us <= 0) invalid("sample_interval_us must be > 0");
  if (spec.step_duration_us <= 0 ||
      spec.step_duration_us % spec.sample_interval_us != 0) {
    invalid("step_duration_us must be a positive multiple of the interval");
  }
  if (spec.batch_size < 1) invalid("batch_size must be >= 1");
  if (spec.core_count < 1) invalid("core_count must be >= 1");
  if (spec.warmup_steps < 0) invalid("warmup_steps must be >= 0");
  if (spec.device_mem_capacity_bytes == 0) invalid("capacity must be > 0");
  if (!(spec.noise_amplitude >= 0.0 && spec.noise_amplitude <= 1.0)) {
    invalid("noise_amplitude must be in [0,1]");
  }
  if (spec.phases.empty()) invalid("at least one phase is required");
  double sum = 0.0;
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  for (const auto& p : spec.phases) {
    if (p.op_name.empty()) invalid("phase op_name is empty");
    if (!(p.fraction > 0.0)) invalid("phase fractions must be positive");
    if (static_cast<std::int64_t>(p.core_util.size()) != spec.core_count) {
      invalid(fmt::format("phase '{}' has {} core utilizations, expected {}",
                          p.op_name, p.core_util.size(), spec.core_count));
    }
    if (!std::all_of(p.core_util.begin(), p.core_util.end(), in_unit) ||
        !in_unit(p.gpu_util)) {
      invalid(fmt::format("phase '{}' utilization outside [0,1]", p.op_name));
    }
    for (Rail r : kAllRails) {
      if (!(p.power_mw(r) >= 0.0)) {
        invalid(fmt::format("phase '{}' has negative power", p.op_name));
      }
    }
    sum += p.fraction;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    invalid(fmt::format("phase fractions sum to {}, not 1", sum));
  }
  auto bounds = phase_bounds(spec);
  for (std::size_t k = 1; k < bounds.size(); ++k) {
    if (bounds[k] % spec.sample_interval_us != 0 || bounds[k] <= bounds[k - 1]) {
      invalid(fmt::format(
          "phase '{}' must span a whole, positive number of sample intervals",
          spec.phases[k - 1].op_name));
    }
  }
}

GroundTruth ground_truth(const SynthSpec& spec) {
  check_spec(spec);
  GroundTruth g;
  const auto cores = static_cast<std::size_t>(spec.core_count);
  g.per_core_util.assign(cores, 0.0);
  g.idle_ratio_per_core.assign(cores, 0.0);
  for (const auto& p : spec.phases) {
    for (std::size_t c = 0; c < cores; ++c) {
      g.per_core_util[c] += p.fraction * p.core_util[c];
      if (p.core_util[c] == 0.0) g.idle_ratio_per_core[c] += p.fraction;
    }
    g.gpu_util += p.fraction * p.gpu_util;
    for (Rail r : kAllRails) {
      g.mean_power_mw[r] += p.fraction * p.power_mw(r);
      g.energy_per_step_joules[r] += p.fraction *
                                     static_cast<double>(spec.step_duration_us) *
                                     p.power_mw(r) * 1e-9;
    }
  }
  double sum = 0.0;
  for (double u : g.per_core_util) sum += u;
  g.cpu_avg_util = sum / static_cast<double>(cores);

  g.step_count = spec.steps;
  g.analysis_steps = std::max<std::int64_t>(0, spec.steps - spec.warmup_steps);
  for (Rail r : kAllRails) {
    g.energy_joules[r] =
        static_cast<double>(g.analysis_steps) * g.energy_per_step_joules[r];
  }
  std::uint64_t peak = 0;
  for (const auto& p : spec.phases) peak = std::max(peak, p.mem_bytes);
  if (spec.warmup_steps > 0) peak += spec.warmup_extra_mem_bytes;
  g.peak_mem_bytes = peak;
  g.throughput_samples_per_sec = static_cast<double>(spec.batch_size) * 1e6 /
                                 static_cast<double>(spec.step_duration_us);
  g.period_us = spec.step_duration_us;

  for (const auto& p : spec.phases) {
    auto& agg = g.per_op[p.op_name];
    auto dur = std::llround(p.fraction *
                            static_cast<double>(spec.step_duration_us));
    agg.count += spec.steps;
    agg.total_busy_us += spec.steps * dur;
    agg.attributed_samples += spec.steps * (dur / spec.sample_interval_us);
  }
  return g;
}

SynthRun generate(const SynthSpec& spec) {
  SynthRun out;
  out.truth = ground_truth(spec);
  const auto bounds = phase_bounds(spec);
  std::mt19937_64 rng(spec.seed);
  const double a = spec.noise_amplitude;

  Run& run = out.run;
  run.meta.run_id = spec.run_id;
  run.meta.batch_size = spec.batch_size;
  run.meta.core_count = spec.core_count;
  run.meta.sample_interval_us = spec.sample_interval_us;
  run.meta.device_mem_capacity_bytes = spec.device_mem_capacity_bytes;
  run.meta.warmup_steps = spec.warmup_steps;
  run.memory_breakdown = spec.memory_breakdown;

  for (std::int64_t s = 0; s < spec.steps; ++s) {
    const std::int64_t base = s * spec.step_duration_us;
    for (std::size_t k = 0; k < spec.phases.size(); ++k) {
      const auto& p = spec.phases[k];
      OpEvent op;
      op.op_name = p.op_name;
      op.layer = fmt::format("phase{}", k);
      op.device = p.device;
      if (!spec.strip_step_ids) op.step_id = s;
      op.start = Timestamp{base + bounds[k]};
      op.end = Timestamp{base + bounds[k + 1]};
      run.ops.push_back(std::move(op));
    }
  }

  const std::int64_t total = spec.steps * spec.step_duration_us;
  for (std::int64_t t = 0; t < total; t += spec.sample_interval_us) {
    const std::int64_t step = t / spec.step_duration_us;
    const std::int64_t offset = t % spec.step_duration_us;
    auto k = static_cast<std::size_t>(
        std::upper_bound(bounds.begin(), bounds.end(), offset) -
        bounds.begin() - 1);
    const Phase& p = spec.phases[k];

    TelemetrySample sample;
    sample.t = Timestamp{t};
    auto util = [&](double u) {
      return a > 0.0 ? std::clamp(u + a * unit_noise(rng), 0.0, 1.0) : u;
    };
    auto power = [&](double mw) {
      return a > 0.0 ? std::max(0.0, mw * (1.0 + a * unit_noise(rng))) : mw;
    };
    for (double u : p.core_util) sample.cpu_core_util.push_back(util(u));
    sample.gpu_util = util(p.gpu_util);
    sample.power_cpu_mw = power(p.power_cpu_mw);
    sample.power_gpu_mw = power(p.power_gpu_mw);
    sample.power_mem_mw = power(p.power_mem_mw);
    sample.power_sys_mw = power(p.power_sys_mw);
    sample.mem_used_bytes =
        p.mem_bytes + (step < spec.warmup_steps ? spec.warmup_extra_mem_bytes : 0);
    run.samples.push_back(std::move(sample));
  }
  return out;
}

SynthSpec default_spec() {
  SynthSpec spec;
  spec.run_id = "synth-default";
  Phase compute;
  compute.op_name = "Conv2D";
  compute.device = Device::GPU;
  compute.fraction = 0.6;
  compute.core_util = {0.9, 0.2, 0.3, 0.3, 0.2, 0.0};
  compute.gpu_util = 1.0;
  compute.power_cpu_mw = 1000;
  compute.power_gpu_mw = 4000;
  compute.power_mem_mw = 2000;
  compute.power_sys_mw = 7500;
  compute.mem_bytes = 3'000'000'000ULL;
  Phase input;
  input.op_name = "DataLoad";
  input.device = Device::CPU;
  input.fraction = 0.4;
  input.core_util = {1.0, 0.6, 0.5, 0.5, 0.4, 0.0};
  input.gpu_util = 0.0;
  input.power_cpu_mw = 1500;
  input.power_gpu_mw = 500;
  input.power_mem_mw = 1200;
  input.power_sys_mw = 3500;
  input.mem_bytes = 2'500'000'000ULL;
  spec.phases = {compute, input};
  spec.warmup_extra_mem_bytes = 500'000'000ULL;
  return spec;
}

SynthSpec random_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(
                                                      hi - lo + 1));
  };
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  // Zero with probability 1/4 so idle ratios are exercised.
  auto util = [&] { return pick(0, 3) == 0 ? 0.0 : unit(); };

  static const char* kNames[] = {"Conv2D", "MatMul", "BiasAdd", "Relu",
                                 "BatchNorm", "DataLoad", "ApplyAdam"};
  static const std::int64_t kIntervals[] = {1000, 5000, 10000};
  static const std::int64_t kBatches[] = {1, 2, 4, 8, 16, 32, 64};

  SynthSpec spec;
  spec.run_id = fmt::format("random-{}", seed);
  spec.seed = seed;
  spec.warmup_steps = pick(0, 3);
  spec.steps = spec.warmup_steps + pick(2, 8);
  spec.core_count = pick(1, 8);
  spec.sample_interval_us = kIntervals[pick(0, 2)];
  spec.batch_size = kBatches[pick(0, 6)];
  const std::int64_t per_step = pick(8, 60);
  spec.step_duration_us = per_step * spec.sample_interval_us;

  const auto phase_count = pick(1, std::min<std::int64_t>(4, per_step));
  // Split per_step samples into phase_count positive parts.
  std::vector<std::int64_t> cuts;
  while (static_cast<std::int64_t>(cuts.size()) < phase_count - 1) {
    auto c = pick(1, per_step - 1);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.insert(cuts.begin(), 0);
  cuts.push_back(per_step);

  spec.phases.clear();
  for (std::int64_t k = 0; k < phase_count; ++k) {
    Phase p;
    p.op_name = kNames[pick(0, 6)];
    p.device = pick(0, 1) ? Device::GPU : Device::CPU;
    std::int64_t span = cuts[static_cast<std::size_t>(k + 1)] -
                        cuts[static_cast<std::size_t>(k)];
    p.fraction = static_cast<double>(span) / static_cast<double>(per_step);
    for (std::int64_t c = 0; c < spec.core_count; ++c) {
      p.core_util.push_back(util());
    }
    p.gpu_util = util();
    p.power_cpu_mw = std::round(unit() * 3000.0);
    p.power_gpu_mw = std::round(unit() * 8000.0);
    p.power_mem_mw = std::round(unit() * 3000.0);
    p.power_sys_mw =
        p.power_cpu_mw + p.power_gpu_mw + p.power_mem_mw + std::round(unit() * 2000);
    p.mem_bytes = static_cast<std::uint64_t>(pick(100, 6000)) * 1'000'000ULL;
    spec.phases.push_back(std::move(p));
  }
  spec.warmup_extra_mem_bytes =
      static_cast<std::uint64_t>(pick(0, 500)) * 1'000'000ULL;
  return spec;
}

namespace {

json phase_to_json(const Phase& p) {
  return {{"op_name", p.op_name},
          {"device", std::string(to_string(p.device))},
          {"fraction", p.fraction},
          {"core_util", p.core_util},
          {"gpu_util", p.gpu_util},
          {"power_cpu_mw", p.power_cpu_mw},
          {"power_gpu_mw", p.power_gpu_mw},
          {"power_mem_mw", p.power_mem_mw},
          {"power_sys_mw", p.power_sys_mw},
          {"mem_bytes", p.mem_bytes}};
}

json rail_map(const std::map<Rail, double>& m) {
  json j = json::object();
  for (const auto& [rail, v] : m) j[std::string(to_string(rail))] = v;
  return j;
}

}  // namespace

std::string spec_to_json(const SynthSpec& spec) {
  json j;
  j["run_id"] = spec.run_id;
  j["steps"] = spec.steps;
  j["step_duration_us"] = spec.step_duration_us;
  j["batch_size"] = spec.batch_size;
  j["core_count"] = spec.core_count;
  j["sample_interval_us"] = spec.sample_interval_us;
  j["warmup_steps"] = spec.warmup_steps;
  j["device_mem_capacity_bytes"] = spec.device_mem_capacity_bytes;
  j["noise_amplitude"] = spec.noise_amplitude;
  j["seed"] = spec.seed;
  j["strip_step_ids"] = spec.strip_step_ids;
  j["warmup_extra_mem_bytes"] = spec.warmup_extra_mem_bytes;
  j["phases"] = json::array();
  for (const auto& p : spec.phases) j["phases"].push_back(phase_to_json(p));
  if (spec.memory_breakdown) {
    const auto& m = *spec.memory_breakdown;
    json mb = json::object();
    if (m.parameters_bytes) mb["parameters_bytes"] = *m.parameters_bytes;
    if (m.gradients_bytes) mb["gradients_bytes"] = *m.gradients_bytes;
    if (m.input_bytes) mb["input_bytes"] = *m.input_bytes;
    if (m.intermediate_bytes) mb["intermediate_bytes"] = *m.intermediate_bytes;
    mb["workspace_slack_bytes"] = m.workspace_slack_bytes;
    j["memory_breakdown"] = mb;
  }
  return j.dump(2) + "\n";
}

SynthSpec spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    invalid(fmt::format("spec is not valid JSON ({})", e.what()));
  }
  if (!j.is_object()) invalid("spec is not a JSON object");
  SynthSpec spec;
  try {
    spec.run_id = j.value("run_id", spec.run_id);
    spec.steps = j.value("steps", spec.steps);
    spec.step_duration_us = j.value("step_duration_us", spec.step_duration_us);
    spec.batch_size = j.value("batch_size", spec.batch_size);
    spec.core_count = j.value("core_count", spec.core_count);
    spec.sample_interval_us =
        j.value("sample_interval_us", spec.sample_interval_us);
    spec.warmup_steps = j.value("warmup_steps", spec.warmup_steps);
    spec.device_mem_capacity_bytes =
        j.value("device_mem_capacity_bytes", spec.device_mem_capacity_bytes);
    spec.noise_amplitude = j.value("noise_amplitude", spec.noise_amplitude);
    spec.seed = j.value("seed", spec.seed);
    spec.strip_step_ids = j.value("strip_step_ids", spec.strip_step_ids);
    spec.warmup_extra_mem_bytes =
        j.value("warmup_extra_mem_bytes", spec.warmup_extra_mem_bytes);
    for (const auto& pj : j.at("phases")) {
      Phase p;
      p.op_name = pj.at("op_name").get<std::string>();
      auto dev = device_from_string(pj.value("device", std::string("GPU")));
      if (!dev) invalid("phase device must be CPU or GPU");
      p.device = *dev;
      p.fraction = pj.at("fraction").get<double>();
      p.core_util = pj.at("core_util").get<std::vector<double>>();
      p.gpu_util = pj.value("gpu_util", 0.0);
      p.power_cpu_mw = pj.value("power_cpu_mw", 0.0);
      p.power_gpu_mw = pj.value("power_gpu_mw", 0.0);
      p.power_mem_mw = pj.value("power_mem_mw", 0.0);
      p.power_sys_mw = pj.value("power_sys_mw", 0.0);
      p.mem_bytes = pj.value("mem_bytes", std::uint64_t{0});
      spec.phases.push_back(std::move(p));
    }
    if (auto mb = j.find("memory_breakdown"); mb != j.end() && !mb->is_null()) {
      MemoryBreakdown m;
      auto opt = [&](const char* k) -> std::optional<std::uint64_t> {
        if (!mb->contains(k) || (*mb)[k].is_null()) return std::nullopt;
        return (*mb)[k].get<std::uint64_t>();
      };
      m.parameters_bytes = opt("parameters_bytes");
      m.gradients_bytes = opt("gradients_bytes");
      m.input_bytes = opt("input_bytes");
      m.intermediate_bytes = opt("intermediate_bytes");
      m.workspace_slack_bytes = opt("workspace_slack_bytes").value_or(0);
      spec.memory_breakdown = m;
    }
  } catch (const json::exception& e) {
    invalid(fmt::format("malformed spec ({})", e.what()));
  }
  check_spec(spec);
  return spec;
}

std::string truth_to_json(const GroundTruth& g) {
  json j;
  j["per_core_util"] = g.per_core_util;
  j["cpu_avg_util"] = g.cpu_avg_util;
  j["gpu_util"] = g.gpu_util;
  j["idle_ratio_per_core"] = g.idle_ratio_per_core;
  j["mean_power_mw"] = rail_map(g.mean_power_mw);
  j["energy_per_step_joules"] = rail_map(g.energy_per_step_joules);
  j["energy_joules"] = rail_map(g.energy_joules);
  j["peak_mem_bytes"] = g.peak_mem_bytes;
  j["throughput_samples_per_sec"] = g.throughput_samples_per_sec;
  j["period_us"] = g.period_us;
  j["step_count"] = g.step_count;
  j["analysis_steps"] = g.analysis_steps;
  j["per_op"] = json::object();
  for (const auto& [name, agg] : g.per_op) {
    j["per_op"][name] = {{"count", agg.count},
                         {"total_busy_us", agg.total_busy_us},
                         {"attributed_samples", agg.attributed_samples}};
  }
  return j.dump(2) + "\n";
}

}  // namespace stepscope::synth
