#include "stepscope/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace stepscope::ingest {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Calls fn(line_no, line) for every non-blank line.
template <typename Fn>
void for_each_line(std::string_view bytes, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= bytes.size()) {
    if (pos == bytes.size()) break;
    std::size_t nl = bytes.find('\n', pos);
    std::string_view raw = bytes.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    std::string_view line = trim(raw);
    if (!line.empty()) fn(line_no, line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) return std::nullopt;
  }
  return value;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Diagnostic line_error(ErrorCode code, std::string msg, std::size_t line,
                      const std::string& source) {
  return {Severity::error, code, std::move(msg), line, source};
}

}  // namespace

std::string format_percent(double fraction) {
  if (fraction == 0.0) return "0";
  char buf[1100];
  auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof buf, fraction, std::chars_format::fixed);
  std::string s(buf, ptr);
  bool negative = !s.empty() && s.front() == '-';
  if (negative) s.erase(0, 1);

  // Shift the decimal point two places right.
  std::string int_part = s;
  std::string frac_part;
  if (auto dot = s.find('.'); dot != std::string::npos) {
    int_part = s.substr(0, dot);
    frac_part = s.substr(dot + 1);
  }
  while (frac_part.size() < 2) frac_part.push_back('0');
  int_part += frac_part.substr(0, 2);
  frac_part.erase(0, 2);
  std::size_t nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  std::string out = negative ? "-" + int_part : int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  return out;
}

std::optional<double> parse_percent(std::string_view token) {
  token = trim(token);
  if (!parse_number<double>(token)) return std::nullopt;
  // Divide by 100 in decimal so the stored fraction is the correctly rounded
  // value of the written digits.
  std::string scaled;
  auto epos = token.find_first_of("eE");
  if (epos == std::string_view::npos) {
    scaled = fmt::format("{}e-2", token);
  } else {
    auto exp = parse_number<long>(token.substr(epos + 1));
    if (!exp) return std::nullopt;
    scaled = fmt::format("{}e{}", token.substr(0, epos), *exp - 2);
  }
  return parse_number<double>(scaled);
}

OpTraceParse parse_op_trace(std::string_view bytes, const std::string& source) {
  OpTraceParse out;
  std::set<std::string> warned_keys;
  static const std::set<std::string> known = {"op",       "layer",
                                              "device",   "step",
                                              "start_us", "end_us"};
  bool any_line = false;

  for_each_line(bytes, [&](std::size_t line_no, std::string_view line) {
    any_line = true;
    auto fail = [&](ErrorCode c, std::string msg) {
      out.diagnostics.push_back(line_error(c, std::move(msg), line_no, source));
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::MalformedLine, fmt::format("invalid JSON ({})", e.what()));
      return;
    }
    if (!j.is_object()) {
      fail(ErrorCode::MalformedLine, "record is not a JSON object");
      return;
    }
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key) && warned_keys.insert(key).second) {
        out.diagnostics.push_back({Severity::warning, ErrorCode::UnknownField,
                                   fmt::format("ignoring unknown key '{}'", key),
                                   line_no, source});
      }
    }

    bool ok = true;
    auto require_int = [&](const char* key) -> std::int64_t {
      auto it = j.find(key);
      if (it == j.end() || !it->is_number_integer()) {
        fail(ErrorCode::MalformedLine,
             fmt::format("'{}' missing or not an integer", key));
        ok = false;
        return 0;
      }
      if (it->is_number_unsigned() &&
          it->get<std::uint64_t>() >
              static_cast<std::uint64_t>(INT64_MAX)) {
        fail(ErrorCode::MalformedLine, fmt::format("'{}' out of range", key));
        ok = false;
        return 0;
      }
      std::int64_t v = it->get<std::int64_t>();
      if (v < 0) {
        fail(ErrorCode::MalformedLine, fmt::format("'{}' is negative", key));
        ok = false;
      }
      return v;
    };

    OpEvent op;
    auto name = j.find("op");
    if (name == j.end() || !name->is_string()) {
      fail(ErrorCode::MalformedLine, "'op' missing or not a string");
      ok = false;
    } else {
      op.op_name = name->get<std::string>();
    }
    if (auto layer = j.find("layer"); layer != j.end() && !layer->is_null()) {
      if (!layer->is_string()) {
        fail(ErrorCode::MalformedLine, "'layer' is not a string");
        ok = false;
      } else {
        op.layer = layer->get<std::string>();
      }
    }
    auto dev = j.find("device");
    if (dev == j.end() || !dev->is_string()) {
      fail(ErrorCode::MalformedLine, "'device' missing or not a string");
      ok = false;
    } else if (auto d = device_from_string(dev->get<std::string>())) {
      op.device = *d;
    } else {
      fail(ErrorCode::UnknownDevice,
           fmt::format("unknown device '{}'", dev->get<std::string>()));
      ok = false;
    }
    if (auto step = j.find("step"); step != j.end() && !step->is_null()) {
      op.step_id = require_int("step");
    }
    op.start = Timestamp{require_int("start_us")};
    op.end = Timestamp{require_int("end_us")};

    if (ok) {
      out.ops.push_back(std::move(op));
      out.op_lines.push_back(line_no);
    }
  });

  if (!any_line) {
    out.diagnostics.push_back(
        {Severity::error, ErrorCode::EmptyTrace, "op trace is empty", {},
         source});
  }
  return out;
}

TelemetryParse parse_telemetry(std::string_view bytes, std::int64_t core_count,
                               const std::string& source) {
  TelemetryParse out;
  bool have_header = false;
  bool header_ok = false;
  std::vector<std::string> columns;

  // Column slots; -1 when ignored.
  int col_t = -1, col_gpu = -1, col_pcpu = -1, col_pgpu = -1, col_pmem = -1,
      col_psys = -1, col_mem = -1;
  std::vector<int> col_core;

  auto split = [](std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
      auto comma = line.find(',', pos);
      fields.push_back(trim(line.substr(
          pos, comma == std::string_view::npos ? std::string_view::npos
                                               : comma - pos)));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return fields;
  };

  auto read_header = [&](std::size_t line_no, std::string_view line) {
    auto fields = split(line);
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      columns.emplace_back(fields[i]);
      index.emplace(columns.back(), static_cast<int>(i));
    }
    auto head_error = [&](ErrorCode c, std::string msg) {
      out.diagnostics.push_back(line_error(c, std::move(msg), line_no, source));
    };
    auto need = [&](const char* name) {
      auto it = index.find(name);
      if (it == index.end()) {
        head_error(ErrorCode::MalformedLine,
                   fmt::format("header lacks required column '{}'", name));
        return -1;
      }
      return it->second;
    };
    col_t = need("t_us");
    col_gpu = need("gpu");
    col_pcpu = need("p_cpu_mw");
    col_pgpu = need("p_gpu_mw");
    col_pmem = need("p_mem_mw");
    col_psys = need("p_sys_mw");
    col_mem = need("mem_bytes");

    std::int64_t cores_in_header = 0;
    for (const auto& name : columns) {
      if (name.size() > 1 && name[0] == 'c' &&
          std::all_of(name.begin() + 1, name.end(),
                      [](char c) { return c >= '0' && c <= '9'; })) {
        ++cores_in_header;
      }
    }
    bool cores_ok = true;
    if (cores_in_header != core_count) {
      head_error(ErrorCode::CoreCountMismatch,
                 fmt::format("header has {} core columns, run declares {}",
                             cores_in_header, core_count));
      cores_ok = false;
    }
    for (std::int64_t c = 0; c < core_count && cores_ok; ++c) {
      auto it = index.find(fmt::format("c{}", c));
      if (it == index.end()) {
        head_error(ErrorCode::MalformedLine,
                   fmt::format("header lacks core column 'c{}'", c));
        cores_ok = false;
      } else {
        col_core.push_back(it->second);
      }
    }

    std::set<int> used = {col_t,    col_gpu,  col_pcpu, col_pgpu,
                          col_pmem, col_psys, col_mem};
    used.insert(col_core.begin(), col_core.end());
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (!used.count(static_cast<int>(i))) {
        out.diagnostics.push_back(
            {Severity::warning, ErrorCode::UnknownField,
             fmt::format("ignoring unknown column '{}'", columns[i]), line_no,
             source});
      }
    }
    header_ok = !has_errors(out.diagnostics);
  };

  for_each_line(bytes, [&](std::size_t line_no, std::string_view line) {
    if (!have_header) {
      have_header = true;
      read_header(line_no, line);
      return;
    }
    if (!header_ok) return;
    auto fields = split(line);
    auto fail = [&](ErrorCode c, std::string msg) {
      out.diagnostics.push_back(line_error(c, std::move(msg), line_no, source));
    };
    if (fields.size() != columns.size()) {
      fail(ErrorCode::MalformedLine,
           fmt::format("expected {} fields, found {}", columns.size(),
                       fields.size()));
      return;
    }
    bool ok = true;
    TelemetrySample s;

    auto pct = [&](int col) -> double {
      auto v = parse_percent(fields[col]);
      if (!v) {
        fail(ErrorCode::MalformedLine,
             fmt::format("column '{}': '{}' is not a number", columns[col],
                         fields[col]));
        ok = false;
        return 0.0;
      }
      if (*v < 0.0 || *v > 1.0) {
        fail(ErrorCode::UtilizationOutOfRange,
             fmt::format("column '{}': {}% outside [0,100]", columns[col],
                         fields[col]));
        ok = false;
      }
      return *v;
    };
    auto power = [&](int col) -> double {
      auto v = parse_number<double>(fields[col]);
      if (!v) {
        fail(ErrorCode::MalformedLine,
             fmt::format("column '{}': '{}' is not a number", columns[col],
                         fields[col]));
        ok = false;
        return 0.0;
      }
      if (*v < 0.0) {
        fail(ErrorCode::NegativePower,
             fmt::format("column '{}': {} mW is negative", columns[col], *v));
        ok = false;
      }
      return *v;
    };

    if (auto t = parse_number<std::int64_t>(fields[col_t]); t && *t >= 0) {
      s.t = Timestamp{*t};
    } else {
      fail(ErrorCode::MalformedLine,
           fmt::format("t_us '{}' is not a non-negative integer",
                       fields[col_t]));
      ok = false;
    }
    s.cpu_core_util.reserve(col_core.size());
    for (int col : col_core) s.cpu_core_util.push_back(pct(col));
    s.gpu_util = pct(col_gpu);
    s.power_cpu_mw = power(col_pcpu);
    s.power_gpu_mw = power(col_pgpu);
    s.power_mem_mw = power(col_pmem);
    s.power_sys_mw = power(col_psys);
    if (auto m = parse_number<std::uint64_t>(fields[col_mem])) {
      s.mem_used_bytes = *m;
    } else {
      fail(ErrorCode::MalformedLine,
           fmt::format("mem_bytes '{}' is not a non-negative integer",
                       fields[col_mem]));
      ok = false;
    }
    if (ok) {
      out.samples.push_back(std::move(s));
      out.sample_lines.push_back(line_no);
    }
  });

  if (!have_header) {
    out.diagnostics.push_back({Severity::error, ErrorCode::EmptyTrace,
                               "telemetry file is empty", {}, source});
  }
  return out;
}

std::string write_op_trace(const std::vector<OpEvent>& ops) {
  std::string out;
  for (const auto& op : ops) {
    nlohmann::ordered_json j;
    j["op"] = op.op_name;
    if (op.layer) j["layer"] = *op.layer;
    j["device"] = std::string(to_string(op.device));
    if (op.step_id) j["step"] = *op.step_id;
    j["start_us"] = op.start.micros;
    j["end_us"] = op.end.micros;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string write_telemetry(const std::vector<TelemetrySample>& samples,
                            std::int64_t core_count) {
  std::string out = "t_us";
  for (std::int64_t c = 0; c < core_count; ++c) out += fmt::format(",c{}", c);
  out += ",gpu,p_cpu_mw,p_gpu_mw,p_mem_mw,p_sys_mw,mem_bytes\n";
  for (const auto& s : samples) {
    out += std::to_string(s.t.micros);
    for (double u : s.cpu_core_util) {
      out += ',';
      out += format_percent(u);
    }
    out += ',';
    out += format_percent(s.gpu_util);
    for (Rail r : kAllRails) {
      out += ',';
      out += shortest(s.power_mw(r));
    }
    out += ',';
    out += std::to_string(s.mem_used_bytes);
    out += '\n';
  }
  return out;
}

namespace {

json breakdown_to_json(const MemoryBreakdown& m) {
  json j = json::object();
  auto put = [&](const char* k, const std::optional<std::uint64_t>& v) {
    if (v) j[k] = *v;
  };
  put("parameters_bytes", m.parameters_bytes);
  put("gradients_bytes", m.gradients_bytes);
  put("input_bytes", m.input_bytes);
  put("intermediate_bytes", m.intermediate_bytes);
  j["workspace_slack_bytes"] = m.workspace_slack_bytes;
  return j;
}

}  // namespace

ManifestParse parse_manifest(std::string_view json_text,
                             const std::string& source) {
  ManifestParse out;
  auto fail = [&](std::string msg) {
    out.diagnostics.push_back(
        {Severity::error, ErrorCode::MalformedLine, std::move(msg), {}, source});
  };
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(fmt::format("manifest is not valid JSON ({})", e.what()));
    return out;
  }
  if (!j.is_object()) {
    fail("manifest is not a JSON object");
    return out;
  }

  RunManifest m;
  auto warn_unknown = [&](const json& obj, const std::set<std::string>& known,
                          const char* where) {
    for (const auto& [key, value] : obj.items()) {
      if (!known.count(key)) {
        out.diagnostics.push_back(
            {Severity::warning, ErrorCode::UnknownField,
             fmt::format("ignoring unknown {} key '{}'", where, key), {},
             source});
      }
    }
  };
  warn_unknown(j,
               {"schema_version", "meta", "op_trace_path", "telemetry_path",
                "memory_breakdown"},
               "manifest");

  auto get_string = [&](const json& obj, const char* key) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string() || it->get<std::string>().empty()) {
      fail(fmt::format("'{}' missing or not a non-empty string", key));
      return {};
    }
    return it->get<std::string>();
  };
  auto get_int = [&](const json& obj, const char* key,
                     std::optional<std::int64_t> fallback) -> std::int64_t {
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (!fallback) fail(fmt::format("'{}' is required", key));
      return fallback.value_or(0);
    }
    if (!it->is_number_integer()) {
      fail(fmt::format("'{}' is not an integer", key));
      return 0;
    }
    return it->get<std::int64_t>();
  };

  auto meta_it = j.find("meta");
  if (meta_it == j.end() || !meta_it->is_object()) {
    fail("'meta' missing or not an object");
  } else {
    const json& mj = *meta_it;
    warn_unknown(mj,
                 {"run_id", "batch_size", "core_count", "sample_interval_us",
                  "device_mem_capacity_bytes", "warmup_steps"},
                 "meta");
    RunMeta defaults;
    m.meta.run_id = get_string(mj, "run_id");
    m.meta.batch_size = get_int(mj, "batch_size", std::nullopt);
    m.meta.core_count = get_int(mj, "core_count", std::nullopt);
    m.meta.sample_interval_us =
        get_int(mj, "sample_interval_us", defaults.sample_interval_us);
    m.meta.warmup_steps = get_int(mj, "warmup_steps", defaults.warmup_steps);
    auto cap = mj.find("device_mem_capacity_bytes");
    if (cap == mj.end()) {
      m.meta.device_mem_capacity_bytes = defaults.device_mem_capacity_bytes;
    } else if (cap->is_number_unsigned()) {
      m.meta.device_mem_capacity_bytes = cap->get<std::uint64_t>();
    } else {
      fail("'device_mem_capacity_bytes' is not a positive integer");
    }
  }
  m.op_trace_path = get_string(j, "op_trace_path");
  m.telemetry_path = get_string(j, "telemetry_path");

  if (auto mb = j.find("memory_breakdown"); mb != j.end() && !mb->is_null()) {
    if (!mb->is_object()) {
      fail("'memory_breakdown' is not an object");
    } else {
      warn_unknown(*mb,
                   {"parameters_bytes", "gradients_bytes", "input_bytes",
                    "intermediate_bytes", "workspace_slack_bytes"},
                   "memory_breakdown");
      MemoryBreakdown b;
      auto get_bytes = [&](const char* key, std::optional<std::uint64_t>& dst) {
        auto it = mb->find(key);
        if (it == mb->end() || it->is_null()) return;
        if (!it->is_number_unsigned()) {
          fail(fmt::format("'{}' is not a non-negative integer", key));
          return;
        }
        dst = it->get<std::uint64_t>();
      };
      get_bytes("parameters_bytes", b.parameters_bytes);
      get_bytes("gradients_bytes", b.gradients_bytes);
      get_bytes("input_bytes", b.input_bytes);
      get_bytes("intermediate_bytes", b.intermediate_bytes);
      std::optional<std::uint64_t> slack;
      get_bytes("workspace_slack_bytes", slack);
      b.workspace_slack_bytes = slack.value_or(0);
      m.memory_breakdown = b;
    }
  }

  if (!has_errors(out.diagnostics)) out.manifest = std::move(m);
  return out;
}

std::string write_manifest(const RunManifest& m) {
  json j;
  j["schema_version"] = 1;
  j["meta"] = {
      {"run_id", m.meta.run_id},
      {"batch_size", m.meta.batch_size},
      {"core_count", m.meta.core_count},
      {"sample_interval_us", m.meta.sample_interval_us},
      {"device_mem_capacity_bytes", m.meta.device_mem_capacity_bytes},
      {"warmup_steps", m.meta.warmup_steps},
  };
  j["op_trace_path"] = m.op_trace_path;
  j["telemetry_path"] = m.telemetry_path;
  if (m.memory_breakdown) {
    j["memory_breakdown"] = breakdown_to_json(*m.memory_breakdown);
  }
  return j.dump(2) + "\n";
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LoadedRun load_run(const RunManifest& manifest,
                   const std::filesystem::path& base_dir) {
  LoadedRun out;
  out.manifest = manifest;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  auto op_path = resolve(manifest.op_trace_path);
  auto tel_path = resolve(manifest.telemetry_path);

  auto op_bytes = read_file(op_path);
  auto tel_bytes = read_file(tel_path);
  if (!op_bytes) {
    out.diagnostics.push_back({Severity::error, ErrorCode::FileNotFound,
                               fmt::format("cannot read op trace '{}'",
                                           op_path.string()),
                               {}, op_path.string()});
  }
  if (!tel_bytes) {
    out.diagnostics.push_back({Severity::error, ErrorCode::FileNotFound,
                               fmt::format("cannot read telemetry '{}'",
                                           tel_path.string()),
                               {}, tel_path.string()});
  }
  if (!op_bytes || !tel_bytes) return out;

  auto ops = parse_op_trace(*op_bytes, op_path.string());
  auto tel = parse_telemetry(*tel_bytes, manifest.meta.core_count,
                             tel_path.string());
  out.diagnostics.insert(out.diagnostics.end(), ops.diagnostics.begin(),
                         ops.diagnostics.end());
  out.diagnostics.insert(out.diagnostics.end(), tel.diagnostics.begin(),
                         tel.diagnostics.end());
  if (has_errors(out.diagnostics)) return out;

  auto validated = validate_run(manifest.meta, std::move(ops.ops),
                                std::move(tel.samples),
                                manifest.memory_breakdown);
  out.diagnostics.insert(out.diagnostics.end(), validated.diagnostics.begin(),
                         validated.diagnostics.end());
  out.run = std::move(validated.run);
  return out;
}

LoadedRun load_run(const std::filesystem::path& manifest_path) {
  auto text = read_file(manifest_path);
  if (!text) {
    LoadedRun out;
    out.diagnostics.push_back(
        {Severity::error, ErrorCode::FileNotFound,
         fmt::format("cannot read manifest '{}'", manifest_path.string()),
         {}, manifest_path.string()});
    return out;
  }
  auto parsed = parse_manifest(*text, manifest_path.string());
  if (!parsed.manifest) {
    LoadedRun out;
    out.diagnostics = std::move(parsed.diagnostics);
    return out;
  }
  auto out = load_run(*parsed.manifest, manifest_path.parent_path());
  out.diagnostics.insert(out.diagnostics.begin(), parsed.diagnostics.begin(),
                         parsed.diagnostics.end());
  return out;
}

SweepManifestLoad load_sweep_manifest(const std::filesystem::path& path) {
  SweepManifestLoad out;
  auto fail = [&](std::string msg) {
    out.diagnostics.push_back({Severity::error, ErrorCode::MalformedLine,
                               std::move(msg), {}, path.string()});
  };
  auto text = read_file(path);
  if (!text) {
    out.diagnostics.push_back(
        {Severity::error, ErrorCode::FileNotFound,
         fmt::format("cannot read sweep manifest '{}'", path.string()), {},
         path.string()});
    return out;
  }
  json j;
  try {
    j = json::parse(*text);
  } catch (const json::parse_error& e) {
    fail(fmt::format("sweep manifest is not valid JSON ({})", e.what()));
    return out;
  }
  if (!j.is_array()) {
    fail("sweep manifest is not a JSON array");
    return out;
  }
  auto base = path.parent_path();
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& e = j[i];
    if (!e.is_object() || !e.contains("model") || !e["model"].is_string() ||
        !e.contains("manifest")) {
      fail(fmt::format("entry {} needs string 'model' and 'manifest'", i));
      continue;
    }
    SweepEntry entry;
    entry.model = e["model"].get<std::string>();
    const json& m = e["manifest"];
    if (m.is_string()) {
      std::filesystem::path p(m.get<std::string>());
      entry.loaded = load_run(p.is_absolute() ? p : base / p);
    } else if (m.is_object()) {
      auto parsed = parse_manifest(m.dump(), path.string());
      if (parsed.manifest) {
        entry.loaded = load_run(*parsed.manifest, base);
      }
      entry.loaded.diagnostics.insert(entry.loaded.diagnostics.begin(),
                                      parsed.diagnostics.begin(),
                                      parsed.diagnostics.end());
    } else {
      fail(fmt::format("entry {}: 'manifest' must be a path or object", i));
      continue;
    }
    out.diagnostics.insert(out.diagnostics.end(),
                           entry.loaded.diagnostics.begin(),
                           entry.loaded.diagnostics.end());
    out.entries.push_back(std::move(entry));
  }
  return out;
}

std::filesystem::path write_run_files(const Run& run,
                                      const std::filesystem::path& dir,
                                      const std::string& stem) {
  std::filesystem::create_directories(dir);
  RunManifest m;
  m.meta = run.meta;
  m.op_trace_path = stem + ".ops.jsonl";
  m.telemetry_path = stem + ".telemetry.csv";
  m.memory_breakdown = run.memory_breakdown;
  auto write = [](const std::filesystem::path& p, const std::string& data) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << data;
    if (!f) {
      throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
    }
  };
  write(dir / m.op_trace_path, write_op_trace(run.ops));
  write(dir / m.telemetry_path,
        write_telemetry(run.samples, run.meta.core_count));
  auto manifest_path = dir / (stem + ".manifest.json");
  write(manifest_path, write_manifest(m));
  return manifest_path;
}

}  // namespace stepscope::ingest
