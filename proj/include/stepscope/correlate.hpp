// Timestamp association of telemetry samples with op intervals and step
// windows. Intervals are half-open: a sample at t belongs to op X iff
// X.start <= t < X.end, so a sample on a shared boundary goes to the later op.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stepscope/trace_model.hpp"

namespace stepscope::correlate {

struct Attribution {
  std::size_t sample_index = 0;
  std::vector<std::size_t> op_indices;  // ascending; may be empty
  std::optional<std::int64_t> step_id;

  bool operator==(const Attribution&) const = default;
};

/// One Attribution per sample, in sample order. Every covering op is listed
/// (full multi-attribution, no proportional splitting).
std::vector<Attribution> attribute_samples(const Run& run,
                                           std::span<const StepWindow> steps);

/// Index of the window containing t, if any. `steps` must be sorted and
/// disjoint.
std::optional<std::size_t> find_step(std::span<const StepWindow> steps,
                                     Timestamp t);

/// Length of the union of op intervals on `device`, in microseconds.
std::int64_t busy_time(const Run& run, Device device);

/// True when any two ops overlap in time, i.e. some instant is covered twice
/// and per-op attributions double count.
bool has_concurrent_ops(const Run& run);

}  // namespace stepscope::correlate
