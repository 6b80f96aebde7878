#include "stepscope/pipeline.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace stepscope::pipeline {

metrics::MetricReport analyze(const Run& input, const AnalyzeOptions& options) {
  Run overridden;
  const Run* run = &input;
  if (options.warmup_steps && *options.warmup_steps != input.meta.warmup_steps) {
    if (*options.warmup_steps < 0) {
      throw AnalysisError(ErrorCode::UsageError, "warmup must be >= 0");
    }
    overridden = input;
    overridden.meta.warmup_steps = *options.warmup_steps;
    run = &overridden;
  }

  steps::PeriodEstimate period;
  auto windows = steps::resolve_steps(*run, options.signal, &period);
  auto report = metrics::build_report(*run, windows,
                                      {.idle_threshold = options.idle_threshold});
  report.period = period;
  try {
    report.predictability = steps::predictability(*run, windows, options.signal);
  } catch (const AnalysisError&) {
    report.predictability.reset();
  }
  return report;
}

sweep::SweepResult run_sweep(const std::vector<ingest::SweepEntry>& entries,
                             const SweepOptions& options) {
  if (entries.size() < 2) {
    throw AnalysisError(ErrorCode::UsageError,
                        fmt::format("sweep needs at least 2 runs, got {}",
                                    entries.size()));
  }
  const std::string& model = entries.front().model;
  std::vector<sweep::SweepPoint> points;
  std::uint64_t capacity = UINT64_MAX;
  ErrorCollector errors;
  for (const auto& e : entries) {
    if (e.model != model) {
      throw AnalysisError(ErrorCode::MixedModels,
                          fmt::format("sweep mixes models '{}' and '{}'", model,
                                      e.model));
    }
    if (!e.loaded.run) {
      throw AnalysisError(ErrorCode::EmptyTrace, "sweep entry failed to load");
    }
    const Run& run = *e.loaded.run;
    capacity = std::min(capacity, run.meta.device_mem_capacity_bytes);
    errors.attempt([&] {
      points.push_back({run.meta.batch_size, analyze(run, options.analyze)});
    });
  }
  errors.rethrow();
  return sweep::build_sweep(model, std::move(points),
                            options.capacity_bytes.value_or(capacity),
                            options.rail);
}

}  // namespace stepscope::pipeline
