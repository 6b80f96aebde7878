// Report serialization. JSON output is versioned ("schema_version": 1),
// key-sorted and byte-stable; the table format is for people.

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "stepscope/metrics.hpp"
#include "stepscope/sweep.hpp"

namespace stepscope::ingest {

inline constexpr int kSchemaVersion = 1;

enum class ReportFormat { json, table };

std::optional<ReportFormat> report_format_from_string(std::string_view s);

std::string write_report(const metrics::MetricReport& report,
                         ReportFormat format);
std::string write_report(const sweep::SweepResult& result, ReportFormat format);

/// Inverse of write_report(..., json). Throws AnalysisError(MalformedLine).
metrics::MetricReport parse_report(std::string_view json_text);
sweep::SweepResult parse_sweep_result(std::string_view json_text);

}  // namespace stepscope::ingest
