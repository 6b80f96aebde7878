#include "stepscope/report_io.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <json.hpp>

namespace stepscope::ingest {
namespace {

using nlohmann::json;
using metrics::MetricReport;
using metrics::OpAggregate;
using metrics::RailShare;
using metrics::StepMetrics;
using sweep::SweepResult;

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

json rails_to_json(const std::map<Rail, double>& m) {
  json j = json::object();
  for (const auto& [rail, v] : m) j[std::string(to_string(rail))] = v;
  return j;
}

Rail rail_or_throw(const std::string& s) {
  auto r = rail_from_string(s);
  if (!r) throw AnalysisError(ErrorCode::MalformedLine, "unknown rail " + s);
  return *r;
}

std::map<Rail, double> rails_from_json(const json& j) {
  std::map<Rail, double> m;
  for (const auto& [k, v] : j.items()) m[rail_or_throw(k)] = v.get<double>();
  return m;
}

json breakdown_to_json(const std::optional<MemoryBreakdown>& m) {
  if (!m) return nullptr;
  return {{"parameters_bytes", opt(m->parameters_bytes)},
          {"gradients_bytes", opt(m->gradients_bytes)},
          {"input_bytes", opt(m->input_bytes)},
          {"intermediate_bytes", opt(m->intermediate_bytes)},
          {"workspace_slack_bytes", m->workspace_slack_bytes}};
}

std::optional<MemoryBreakdown> breakdown_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  MemoryBreakdown m;
  m.parameters_bytes = get_opt<std::uint64_t>(j, "parameters_bytes");
  m.gradients_bytes = get_opt<std::uint64_t>(j, "gradients_bytes");
  m.input_bytes = get_opt<std::uint64_t>(j, "input_bytes");
  m.intermediate_bytes = get_opt<std::uint64_t>(j, "intermediate_bytes");
  m.workspace_slack_bytes =
      get_opt<std::uint64_t>(j, "workspace_slack_bytes").value_or(0);
  return m;
}

std::vector<std::string> caveats(const MetricReport& r) {
  std::vector<std::string> out;
  if (r.concurrent_ops) {
    out.push_back(
        "concurrent ops present: per-op attributed samples double count");
  }
  for (const auto& [name, agg] : r.per_op) {
    if (agg.below_sampling_resolution()) {
      out.push_back(fmt::format("op '{}' is below sampling resolution", name));
    }
  }
  return out;
}

json report_to_json(const MetricReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "metric_report";
  j["run_id"] = r.run_id;
  j["batch_size"] = r.batch_size;
  j["core_count"] = r.core_count;
  j["sample_interval_us"] = r.sample_interval_us;
  j["warmup_steps"] = r.warmup_steps;
  j["idle_threshold"] = r.idle_threshold;
  j["policy"] = {
      {"utilization_window", "non-warmup steps"},
      {"energy_rule", "rectangle: sum of gap-to-next-sample x power"},
      {"peak_memory_window", "full run including warmup"},
      {"idle_definition", "core utilization <= idle_threshold"},
  };
  j["per_core_util"] = r.per_core_util;
  j["cpu_avg_util"] = r.cpu_avg_util;
  j["gpu_util"] = r.gpu_util;
  j["idle_ratio_per_core"] = r.idle_ratio_per_core;
  j["energy_by_rail_joules"] = rails_to_json(r.energy_by_rail_joules);
  j["peak_mem_bytes"] = r.peak_mem_bytes;
  j["memory_breakdown"] = breakdown_to_json(r.memory_breakdown);
  j["throughput_samples_per_sec"] = r.throughput_samples_per_sec;
  j["power_ranking"] = json::array();
  for (const auto& s : r.power_ranking) {
    j["power_ranking"].push_back({{"rail", std::string(to_string(s.rail))},
                                  {"mean_mw", s.mean_mw},
                                  {"share_of_sys", opt(s.share_of_sys)}});
  }
  j["analysis_window_us"] = r.analysis_window_us;
  j["analysis_sample_count"] = r.analysis_sample_count;
  j["busy_cpu_us"] = r.busy_cpu_us;
  j["busy_gpu_us"] = r.busy_gpu_us;
  j["concurrent_ops"] = r.concurrent_ops;
  j["steps"] = json::array();
  for (const auto& w : r.steps) {
    j["steps"].push_back({{"step_id", w.step_id},
                          {"start_us", w.start.micros},
                          {"end_us", w.end.micros},
                          {"is_warmup", w.is_warmup}});
  }
  j["per_step"] = json::array();
  for (const auto& s : r.per_step) {
    j["per_step"].push_back(
        {{"step_id", s.step_id},
         {"is_warmup", s.is_warmup},
         {"start_us", s.start.micros},
         {"end_us", s.end.micros},
         {"sample_count", s.sample_count},
         {"cpu_avg_util", opt(s.cpu_avg_util)},
         {"gpu_util", opt(s.gpu_util)},
         {"energy_by_rail_joules", rails_to_json(s.energy_by_rail_joules)},
         {"peak_mem_bytes", opt(s.peak_mem_bytes)}});
  }
  j["per_op"] = json::object();
  for (const auto& [name, a] : r.per_op) {
    j["per_op"][name] = {
        {"count", a.count},
        {"total_busy_us", a.total_busy_us},
        {"attributed_samples", a.attributed_samples},
        {"below_sampling_resolution", a.below_sampling_resolution()}};
  }
  if (r.period) {
    j["period"] = {{"period_us", r.period->period_us},
                   {"confidence", r.period->confidence},
                   {"method", std::string(to_string(r.period->method))}};
  } else {
    j["period"] = nullptr;
  }
  if (r.predictability) {
    j["predictability"] = {
        {"signal", std::string(to_string(r.predictability->signal))},
        {"mean_pairwise_correlation",
         r.predictability->mean_pairwise_correlation},
        {"per_step_pairs", r.predictability->per_step_pairs}};
  } else {
    j["predictability"] = nullptr;
  }
  j["caveats"] = caveats(r);
  return j;
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  r.run_id = j.at("run_id").get<std::string>();
  r.batch_size = j.at("batch_size").get<std::int64_t>();
  r.core_count = j.at("core_count").get<std::int64_t>();
  r.sample_interval_us = j.at("sample_interval_us").get<std::int64_t>();
  r.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
  r.idle_threshold = j.at("idle_threshold").get<double>();
  r.per_core_util = j.at("per_core_util").get<std::vector<double>>();
  r.cpu_avg_util = j.at("cpu_avg_util").get<double>();
  r.gpu_util = j.at("gpu_util").get<double>();
  r.idle_ratio_per_core = j.at("idle_ratio_per_core").get<std::vector<double>>();
  r.energy_by_rail_joules = rails_from_json(j.at("energy_by_rail_joules"));
  r.peak_mem_bytes = j.at("peak_mem_bytes").get<std::uint64_t>();
  r.memory_breakdown = breakdown_from_json(j.at("memory_breakdown"));
  r.throughput_samples_per_sec = j.at("throughput_samples_per_sec").get<double>();
  for (const auto& s : j.at("power_ranking")) {
    r.power_ranking.push_back(
        RailShare{rail_or_throw(s.at("rail").get<std::string>()),
                  s.at("mean_mw").get<double>(),
                  get_opt<double>(s, "share_of_sys")});
  }
  r.analysis_window_us = j.at("analysis_window_us").get<std::int64_t>();
  r.analysis_sample_count = j.at("analysis_sample_count").get<std::int64_t>();
  r.busy_cpu_us = j.at("busy_cpu_us").get<std::int64_t>();
  r.busy_gpu_us = j.at("busy_gpu_us").get<std::int64_t>();
  r.concurrent_ops = j.at("concurrent_ops").get<bool>();
  for (const auto& w : j.at("steps")) {
    r.steps.push_back(StepWindow{w.at("step_id").get<std::int64_t>(),
                                 Timestamp{w.at("start_us").get<std::int64_t>()},
                                 Timestamp{w.at("end_us").get<std::int64_t>()},
                                 w.at("is_warmup").get<bool>()});
  }
  for (const auto& s : j.at("per_step")) {
    StepMetrics m;
    m.step_id = s.at("step_id").get<std::int64_t>();
    m.is_warmup = s.at("is_warmup").get<bool>();
    m.start = Timestamp{s.at("start_us").get<std::int64_t>()};
    m.end = Timestamp{s.at("end_us").get<std::int64_t>()};
    m.sample_count = s.at("sample_count").get<std::int64_t>();
    m.cpu_avg_util = get_opt<double>(s, "cpu_avg_util");
    m.gpu_util = get_opt<double>(s, "gpu_util");
    m.energy_by_rail_joules = rails_from_json(s.at("energy_by_rail_joules"));
    m.peak_mem_bytes = get_opt<std::uint64_t>(s, "peak_mem_bytes");
    r.per_step.push_back(std::move(m));
  }
  for (const auto& [name, a] : j.at("per_op").items()) {
    r.per_op[name] = OpAggregate{a.at("count").get<std::int64_t>(),
                                 a.at("total_busy_us").get<std::int64_t>(),
                                 a.at("attributed_samples").get<std::int64_t>()};
  }
  if (const auto& p = j.at("period"); !p.is_null()) {
    auto method = steps::period_method_from_string(p.at("method").get<std::string>());
    if (!method) throw AnalysisError(ErrorCode::MalformedLine, "bad period method");
    r.period = steps::PeriodEstimate{p.at("period_us").get<std::int64_t>(),
                                     p.at("confidence").get<double>(), *method};
  }
  if (const auto& p = j.at("predictability"); !p.is_null()) {
    auto signal = steps::signal_from_string(p.at("signal").get<std::string>());
    if (!signal) throw AnalysisError(ErrorCode::MalformedLine, "bad signal");
    r.predictability = steps::PredictabilityScore{
        *signal, p.at("mean_pairwise_correlation").get<double>(),
        p.at("per_step_pairs").get<std::int64_t>()};
  }
  return r;
}

json sweep_to_json(const SweepResult& s) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "sweep_result";
  j["model"] = s.model;
  j["capacity_bytes"] = s.capacity_bytes;
  j["throughput_speedup"] = s.throughput_speedup;
  j["energy_scaling"] = {
      {"rail", std::string(to_string(s.energy_scaling.rail))},
      {"energy_ratio", s.energy_scaling.energy_ratio},
      {"batch_ratio", s.energy_scaling.batch_ratio},
      {"classification",
       std::string(sweep::to_string(s.energy_scaling.classification))}};
  j["gpu_util_delta"] = s.util_sensitivity.delta_gpu;
  j["cpu_util_delta"] = s.util_sensitivity.delta_cpu;
  if (s.mem_intermediate_growth) {
    j["mem_intermediate_growth"] = {s.mem_intermediate_growth->first,
                                    s.mem_intermediate_growth->second};
  } else {
    j["mem_intermediate_growth"] = nullptr;
  }
  j["feasibility"] = json::array();
  for (const auto& f : s.feasibility) {
    j["feasibility"].push_back(
        {{"batch_size", f.batch_size},
         {"verdict", std::string(sweep::to_string(f.verdict))},
         {"peak_mem_bytes", f.peak_mem_bytes},
         {"memory_breakdown", breakdown_to_json(f.memory_breakdown)}});
  }
  j["points"] = json::array();
  for (const auto& p : s.points) {
    j["points"].push_back(
        {{"batch_size", p.batch_size}, {"report", report_to_json(p.report)}});
  }
  return j;
}

SweepResult sweep_from_json(const json& j) {
  SweepResult s;
  s.model = j.at("model").get<std::string>();
  s.capacity_bytes = j.at("capacity_bytes").get<std::uint64_t>();
  s.throughput_speedup = j.at("throughput_speedup").get<double>();
  const auto& e = j.at("energy_scaling");
  s.energy_scaling.rail = rail_or_throw(e.at("rail").get<std::string>());
  s.energy_scaling.energy_ratio = e.at("energy_ratio").get<double>();
  s.energy_scaling.batch_ratio = e.at("batch_ratio").get<double>();
  auto cls = sweep::scaling_from_string(e.at("classification").get<std::string>());
  if (!cls) throw AnalysisError(ErrorCode::MalformedLine, "bad classification");
  s.energy_scaling.classification = *cls;
  s.util_sensitivity.delta_gpu = j.at("gpu_util_delta").get<double>();
  s.util_sensitivity.delta_cpu = j.at("cpu_util_delta").get<double>();
  if (const auto& g = j.at("mem_intermediate_growth"); !g.is_null()) {
    s.mem_intermediate_growth = std::pair{g.at(0).get<std::uint64_t>(),
                                          g.at(1).get<std::uint64_t>()};
  }
  for (const auto& f : j.at("feasibility")) {
    auto verdict = sweep::verdict_from_string(f.at("verdict").get<std::string>());
    if (!verdict) throw AnalysisError(ErrorCode::MalformedLine, "bad verdict");
    s.feasibility.push_back(
        sweep::Feasibility{f.at("batch_size").get<std::int64_t>(), *verdict,
                           f.at("peak_mem_bytes").get<std::uint64_t>(),
                           breakdown_from_json(f.at("memory_breakdown"))});
  }
  for (const auto& p : j.at("points")) {
    s.points.push_back(sweep::SweepPoint{p.at("batch_size").get<std::int64_t>(),
                                         report_from_json(p.at("report"))});
  }
  return s;
}

json parse_or_throw(std::string_view text, const char* kind) {
  try {
    json j = json::parse(text);
    if (!j.is_object() || j.value("schema_version", 0) != kSchemaVersion ||
        j.value("kind", std::string()) != kind) {
      throw AnalysisError(ErrorCode::MalformedLine,
                          fmt::format("not a schema v{} {}", kSchemaVersion, kind));
    }
    return j;
  } catch (const json::exception& e) {
    throw AnalysisError(ErrorCode::MalformedLine,
                        fmt::format("invalid {} JSON ({})", kind, e.what()));
  }
}

std::string gb(std::uint64_t bytes) {
  return fmt::format("{:.3f} GB", static_cast<double>(bytes) / 1e9);
}

std::string pct(double fraction) { return fmt::format("{:.2f}%", fraction * 100.0); }

std::string metric_table(const MetricReport& r) {
  std::string out;
  auto line = [&](std::string_view label, const std::string& value) {
    out += fmt::format("{:<22}{}\n", label, value);
  };
  std::int64_t analysis_steps = std::count_if(
      r.steps.begin(), r.steps.end(), [](const StepWindow& w) { return !w.is_warmup; });

  line("run", fmt::format("{} (batch {}, {} cores, {} us sampling)", r.run_id,
                          r.batch_size, r.core_count, r.sample_interval_us));
  line("analysis window",
       fmt::format("{} non-warmup steps, {} samples, {:.3f} s", analysis_steps,
                   r.analysis_sample_count,
                   static_cast<double>(r.analysis_window_us) / 1e6));
  line("window policy",
       fmt::format("first {} steps skipped; peak memory includes them",
                   r.warmup_steps));
  line("cpu avg utilization", pct(r.cpu_avg_util));
  line("gpu utilization", pct(r.gpu_util));
  line("throughput", fmt::format("{:.3f} samples/s", r.throughput_samples_per_sec));
  line("peak memory", gb(r.peak_mem_bytes));
  line("busy time", fmt::format("cpu {:.3f} s, gpu {:.3f} s",
                                static_cast<double>(r.busy_cpu_us) / 1e6,
                                static_cast<double>(r.busy_gpu_us) / 1e6));
  if (r.period) {
    line("step period",
         fmt::format("{:.3f} ms ({}, confidence {:.3f})",
                     static_cast<double>(r.period->period_us) / 1e3,
                     to_string(r.period->method), r.period->confidence));
  }
  if (r.predictability) {
    line("predictability",
         fmt::format("{:.4f} mean pairwise correlation of {} over {} pairs",
                     r.predictability->mean_pairwise_correlation,
                     to_string(r.predictability->signal),
                     r.predictability->per_step_pairs));
  }

  out += "\nenergy (non-warmup window)\n";
  for (const auto& [rail, joules] : r.energy_by_rail_joules) {
    out += fmt::format("  {:<6}{:>14.6f} J\n", to_string(rail), joules);
  }
  out += "\npower ranking\n";
  for (const auto& s : r.power_ranking) {
    out += fmt::format("  {:<6}{:>12.1f} mW  {}\n", to_string(s.rail), s.mean_mw,
                       s.share_of_sys ? pct(*s.share_of_sys) + " of sys" : "");
  }
  out += "\ncore  util      idle\n";
  for (std::size_t c = 0; c < r.per_core_util.size(); ++c) {
    out += fmt::format("{:<6}{:<10}{}\n", c, pct(r.per_core_util[c]),
                       pct(r.idle_ratio_per_core[c]));
  }

  std::vector<std::pair<std::string, OpAggregate>> ops(r.per_op.begin(),
                                                       r.per_op.end());
  std::stable_sort(ops.begin(), ops.end(), [](const auto& a, const auto& b) {
    return a.second.total_busy_us > b.second.total_busy_us;
  });
  out += fmt::format("\n{:<24}{:>8}{:>14}{:>10}  note\n", "op", "count",
                     "busy ms", "samples");
  for (const auto& [name, a] : ops) {
    out += fmt::format("{:<24}{:>8}{:>14.3f}{:>10}  {}\n", name, a.count,
                       static_cast<double>(a.total_busy_us) / 1e3,
                       a.attributed_samples,
                       a.below_sampling_resolution() ? "below sampling resolution"
                                                     : "");
  }
  if (r.concurrent_ops) {
    out += "note: concurrent ops present; per-op sample counts double count\n";
  }
  return out;
}

std::string sweep_table(const SweepResult& s) {
  std::string out;
  out += fmt::format("model {}  ({} runs, capacity {})\n", s.model,
                     s.points.size(), gb(s.capacity_bytes));
  out += fmt::format("{:>6}{:>16}{:>10}{:>10}{:>16}{:>14}  {}\n", "batch",
                     "samples/s", "gpu", "cpu", "J/step (sys)", "peak mem",
                     "verdict");
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto& p = s.points[i];
    auto e = p.report.energy_per_step_joules(Rail::sys);
    std::string verdict =
        i < s.feasibility.size() ? std::string(sweep::to_string(s.feasibility[i].verdict))
                                 : "";
    out += fmt::format("{:>6}{:>16.3f}{:>10}{:>10}{:>16}{:>14}  {}\n", p.batch_size,
                       p.report.throughput_samples_per_sec, pct(p.report.gpu_util),
                       pct(p.report.cpu_avg_util),
                       e ? fmt::format("{:.6f}", *e) : "-", gb(p.report.peak_mem_bytes),
                       verdict);
  }
  out += fmt::format("\nthroughput speedup    {:.3f}x\n", s.throughput_speedup);
  out += fmt::format("energy scaling        {:.3f}x at {:.1f}x batch ({}, {} rail)\n",
                     s.energy_scaling.energy_ratio, s.energy_scaling.batch_ratio,
                     sweep::to_string(s.energy_scaling.classification),
                     to_string(s.energy_scaling.rail));
  out += fmt::format("utilization delta     gpu {:+.2f} pts, cpu {:+.2f} pts\n",
                     s.util_sensitivity.delta_gpu * 100.0,
                     s.util_sensitivity.delta_cpu * 100.0);
  if (s.mem_intermediate_growth) {
    out += fmt::format("intermediate memory   {} -> {}\n",
                       gb(s.mem_intermediate_growth->first),
                       gb(s.mem_intermediate_growth->second));
  }
  return out;
}

}  // namespace

std::optional<ReportFormat> report_format_from_string(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "table") return ReportFormat::table;
  return std::nullopt;
}

std::string write_report(const MetricReport& report, ReportFormat format) {
  if (format == ReportFormat::table) return metric_table(report);
  return report_to_json(report).dump(2) + "\n";
}

std::string write_report(const SweepResult& result, ReportFormat format) {
  if (format == ReportFormat::table) return sweep_table(result);
  return sweep_to_json(result).dump(2) + "\n";
}

MetricReport parse_report(std::string_view json_text) {
  json j = parse_or_throw(json_text, "metric_report");
  try {
    return report_from_json(j);
  } catch (const json::exception& e) {
    throw AnalysisError(ErrorCode::MalformedLine,
                        fmt::format("malformed metric report ({})", e.what()));
  }
}

SweepResult parse_sweep_result(std::string_view json_text) {
  json j = parse_or_throw(json_text, "sweep_result");
  try {
    return sweep_from_json(j);
  } catch (const json::exception& e) {
    throw AnalysisError(ErrorCode::MalformedLine,
                        fmt::format("malformed sweep result ({})", e.what()));
  }
}

}  // namespace stepscope::ingest
