#include "stepscope/correlate.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>
#include <utility>

namespace stepscope::correlate {

std::optional<std::size_t> find_step(std::span<const StepWindow> steps,
                                     Timestamp t) {
  auto it = std::upper_bound(
      steps.begin(), steps.end(), t,
      [](Timestamp v, const StepWindow& w) { return v < w.start; });
  if (it == steps.begin()) return std::nullopt;
  --it;
  if (!it->contains(t)) return std::nullopt;
  return static_cast<std::size_t>(it - steps.begin());
}

std::vector<Attribution> attribute_samples(const Run& run,
                                           std::span<const StepWindow> steps) {
  const auto& ops = run.ops;
  const auto& samples = run.samples;

  // Sweep in time order. Validated runs are already sorted, but the order is
  // recomputed here so the result does not depend on that.
  std::vector<std::size_t> op_order(ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) op_order[i] = i;
  std::stable_sort(op_order.begin(), op_order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return ops[a].start < ops[b].start;
                   });
  std::vector<std::size_t> sample_order(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) sample_order[i] = i;
  std::stable_sort(sample_order.begin(), sample_order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return samples[a].t < samples[b].t;
                   });

  using EndEntry = std::pair<std::int64_t, std::size_t>;
  std::priority_queue<EndEntry, std::vector<EndEntry>, std::greater<>> by_end;
  std::set<std::size_t> active;
  std::size_t next_op = 0;

  std::vector<Attribution> out(samples.size());
  for (std::size_t si : sample_order) {
    const Timestamp t = samples[si].t;
    while (next_op < op_order.size() && ops[op_order[next_op]].start <= t) {
      std::size_t oi = op_order[next_op++];
      by_end.emplace(ops[oi].end.micros, oi);
      active.insert(oi);
    }
    while (!by_end.empty() && by_end.top().first <= t.micros) {
      active.erase(by_end.top().second);
      by_end.pop();
    }
    Attribution& a = out[si];
    a.sample_index = si;
    a.op_indices.assign(active.begin(), active.end());
    if (auto w = find_step(steps, t)) a.step_id = steps[*w].step_id;
  }
  return out;
}

namespace {

std::vector<std::pair<std::int64_t, std::int64_t>> sorted_intervals(
    const Run& run, std::optional<Device> device) {
  std::vector<std::pair<std::int64_t, std::int64_t>> iv;
  for (const auto& op : run.ops) {
    if (!device || op.device == *device) {
      iv.emplace_back(op.start.micros, op.end.micros);
    }
  }
  std::sort(iv.begin(), iv.end());
  return iv;
}

}  // namespace

std::int64_t busy_time(const Run& run, Device device) {
  auto iv = sorted_intervals(run, device);
  std::int64_t total = 0;
  std::int64_t cur_start = 0, cur_end = 0;
  bool open = false;
  for (auto [s, e] : iv) {
    if (!open || s > cur_end) {
      if (open) total += cur_end - cur_start;
      cur_start = s;
      cur_end = e;
      open = true;
    } else {
      cur_end = std::max(cur_end, e);
    }
  }
  if (open) total += cur_end - cur_start;
  return total;
}

bool has_concurrent_ops(const Run& run) {
  auto iv = sorted_intervals(run, std::nullopt);
  std::int64_t reach = INT64_MIN;
  for (auto [s, e] : iv) {
    if (s < reach) return true;
    reach = std::max(reach, e);
  }
  return false;
}

}  // namespace stepscope::correlate
