// End-to-end analysis: step resolution, metrics, periodicity and
// predictability for one run, and sweep assembly over several runs.

#pragma once

#include <optional>
#include <vector>

#include "stepscope/ingest.hpp"
#include "stepscope/metrics.hpp"
#include "stepscope/steps.hpp"
#include "stepscope/sweep.hpp"

namespace stepscope::pipeline {

struct AnalyzeOptions {
  std::optional<std::int64_t> warmup_steps;  // overrides the run's value
  steps::Signal signal = steps::Signal::gpu_util;
  double idle_threshold = 0.0;
};

/// Period and predictability are best-effort and left empty when the run is
/// too short for them; every other failure throws AnalysisError.
metrics::MetricReport analyze(const Run& run, const AnalyzeOptions& options = {});

struct SweepOptions {
  AnalyzeOptions analyze;
  Rail rail = Rail::sys;
  std::optional<std::uint64_t> capacity_bytes;  // default: smallest run's
};

sweep::SweepResult run_sweep(const std::vector<ingest::SweepEntry>& entries,
                             const SweepOptions& options = {});

}  // namespace stepscope::pipeline
