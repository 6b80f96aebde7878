#include <doctest.h>

#include <numeric>
#include <random>

#include "stepscope/metrics.hpp"
#include "support.hpp"

using namespace stepscope;
using namespace stepscope::testing;
using doctest::Approx;

namespace {

std::vector<std::int64_t> times_of(const Run& run) {
  std::vector<std::int64_t> t;
  for (const auto& s : run.samples) t.push_back(s.t.micros);
  return t;
}

std::vector<StepWindow> equal_steps(std::int64_t n, std::int64_t len,
                                    std::int64_t warmup = 0) {
  std::vector<StepWindow> w;
  for (std::int64_t i = 0; i < n; ++i) {
    w.push_back({i, Timestamp{i * len}, Timestamp{(i + 1) * len}, i < warmup});
  }
  return w;
}

}  // namespace

TEST_CASE("core utilization fixtures") {
  Run saturated = series_run(std::vector<double>(50, 1.0), {});
  CHECK(metrics::cpu_core_utilization(saturated, metrics::full_window(saturated), 0) == 1.0);

  std::vector<double> binary(100, 0.0);
  for (int i = 0; i < 30; ++i) binary[static_cast<std::size_t>(i * 3)] = 1.0;
  Run run = series_run(binary, {});
  auto w = metrics::full_window(run);
  CHECK(metrics::cpu_core_utilization(run, w, 0) == 0.30);
  CHECK_THROWS_AS(metrics::cpu_core_utilization(run, w, 1), std::out_of_range);
}

TEST_CASE("average over cores") {
  Run run = make_run(make_meta(6), {make_op("A", Device::CPU, 0, 10)},
                     {make_sample(0, {0.6, 0.6, 0, 0, 0, 0})});
  auto w = metrics::full_window(run);
  CHECK(metrics::cpu_avg_utilization(run, w) == Approx(0.2).epsilon(1e-15));
  Run zero = make_run(make_meta(6), {make_op("A", Device::CPU, 0, 10)},
                      {make_sample(0, std::vector<double>(6, 0.0))});
  CHECK(metrics::cpu_avg_utilization(zero, metrics::full_window(zero)) == 0.0);
}

TEST_CASE("gpu utilization fixtures") {
  Run dense = series_run(std::vector<double>(40, 0.964), {});
  CHECK(metrics::gpu_utilization(dense, metrics::full_window(dense)) == Approx(0.964).epsilon(1e-15));
  Run zero = series_run(std::vector<double>(40, 0.0), {});
  CHECK(metrics::gpu_utilization(zero, metrics::full_window(zero)) == 0.0);
}

TEST_CASE("utilization matches the direct-sum oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Run run = random_run(rng, 20);
    auto w = metrics::full_window(run);
    auto t = times_of(run);
    std::vector<double> c0, c1, gpu;
    for (const auto& s : run.samples) {
      c0.push_back(s.cpu_core_util[0]);
      c1.push_back(s.cpu_core_util[1]);
      gpu.push_back(s.gpu_util);
    }
    const auto iv = run.meta.sample_interval_us;
    double u0 = metrics::cpu_core_utilization(run, w, 0);
    double u1 = metrics::cpu_core_utilization(run, w, 1);
    CHECK(rel_close(u0, weighted_mean(t, c0, iv), 1e-12));
    CHECK(rel_close(u1, weighted_mean(t, c1, iv), 1e-12));
    CHECK(rel_close(metrics::gpu_utilization(run, w), weighted_mean(t, gpu, iv), 1e-12));
    CHECK(std::abs(metrics::cpu_avg_utilization(run, w) - (u0 + u1) / 2) <= 1e-12);
  }
}

TEST_CASE("idle ratio") {
  std::vector<double> util(100, 0.4);
  for (int i = 0; i < 65; ++i) util[static_cast<std::size_t>(i)] = 0.0;
  Run run = series_run(util, {});
  auto w = metrics::full_window(run);
  CHECK(metrics::idle_ratio(run, w, 0) == 0.65);
  CHECK(metrics::idle_ratio(run, w, 0, 0.5) == 1.0);
  Run busy = series_run(std::vector<double>(10, 0.01), {});
  CHECK(metrics::idle_ratio(busy, metrics::full_window(busy), 0) == 0.0);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> b(1 + rng() % 300);
    for (auto& x : b) x = static_cast<double>(rng() % 2);
    Run r = series_run(b, {});
    double zeros = static_cast<double>(std::count(b.begin(), b.end(), 0.0));
    CHECK(metrics::idle_ratio(r, metrics::full_window(r), 0) ==
          Approx(zeros / static_cast<double>(b.size())).epsilon(1e-15));
  }
}

TEST_CASE("energy fixtures") {
  Run one = series_run({0.0}, {2000.0});
  CHECK(metrics::energy_joules(one, metrics::full_window(one), Rail::sys) ==
        Approx(0.02).epsilon(1e-15));
  for (std::int64_t interval : {1'000, 4'000, 10'000, 50'000}) {
    std::size_t n = static_cast<std::size_t>(1'000'000 / interval);
    Run run = series_run(std::vector<double>(n, 0.0), std::vector<double>(n, 7500.0),
                         interval);
    CHECK(metrics::energy_joules(run, metrics::full_window(run), Rail::gpu) ==
          Approx(7.5).epsilon(1e-12));
  }
}

TEST_CASE("energy matches the rectangle oracle and is additive") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Run run = random_run(rng, 5);
    auto t = times_of(run);
    std::vector<double> p;
    for (const auto& s : run.samples) p.push_back(s.power_sys_mw);
    const auto iv = run.meta.sample_interval_us;
    double e = metrics::energy_joules(run, metrics::full_window(run), Rail::sys);
    CHECK(std::abs(e - rectangle_energy(t, p, iv)) <= 1e-9);

    std::size_t cut = rng() % t.size();
    auto left = metrics::time_window(run, Timestamp{t.front()}, Timestamp{t[cut]});
    auto right = metrics::time_window(run, Timestamp{t[cut]}, Timestamp{t.back() + 1});
    double split = metrics::energy_joules(run, right, Rail::sys);
    if (!left.empty()) split += metrics::energy_joules(run, left, Rail::sys);
    CHECK(std::abs(split - e) <= 1e-9);
  }
}

TEST_CASE("peak memory") {
  auto gb = [](double x) { return static_cast<std::uint64_t>(x * 1e9); };
  Run run = make_run(make_meta(1), {make_op("A", Device::GPU, 0, 1)},
                     {make_sample(0, {0}, 0, 0, 0, 0, 0, gb(1)),
                      make_sample(10, {0}, 0, 0, 0, 0, 0, gb(5)),
                      make_sample(20, {0}, 0, 0, 0, 0, 0, gb(3))});
  CHECK(metrics::peak_memory(run) == gb(5));

  std::mt19937_64 rng(4);
  std::vector<TelemetrySample> mono;
  std::uint64_t m = 0, oracle = 0;
  for (int i = 0; i < 100; ++i) {
    m += rng() % 1000;
    mono.push_back(make_sample(i * 10, {0}, 0, 0, 0, 0, 0, m));
    oracle = m;
  }
  Run monotone = make_run(make_meta(1), {make_op("A", Device::GPU, 0, 1)}, mono);
  CHECK(metrics::peak_memory(monotone) == oracle);
}

TEST_CASE("throughput") {
  CHECK(metrics::throughput(4, equal_steps(5, 200'000)) == 20.0);
  CHECK(metrics::throughput(1, equal_steps(1, 1'000'000)) == 1.0);
  CHECK_THROWS_AS(metrics::throughput(4, equal_steps(3, 10, 3)), AnalysisError);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<StepWindow> w;
    std::int64_t t = 0, kept = 0, total = 0;
    std::int64_t warm = static_cast<std::int64_t>(rng() % 3);
    for (std::int64_t i = 0; i < 10; ++i) {
      std::int64_t len = 1 + static_cast<std::int64_t>(rng() % 500'000);
      w.push_back({i, Timestamp{t}, Timestamp{t + len}, i < warm});
      if (i >= warm) {
        ++kept;
        total += len;
      }
      t += len + static_cast<std::int64_t>(rng() % 1000);
    }
    double oracle = 16.0 * static_cast<double>(kept) / (static_cast<double>(total) / 1e6);
    CHECK(rel_close(metrics::throughput(16, w), oracle, 1e-12));
  }
}

TEST_CASE("power ranking") {
  auto constant = [](double cpu, double gpu, double mem) {
    std::vector<TelemetrySample> s;
    for (int i = 0; i < 10; ++i) {
      s.push_back(make_sample(i * 10, {0}, 0, cpu, gpu, mem, cpu + gpu + mem + 500));
    }
    return make_run(make_meta(1, 10), {make_op("A", Device::GPU, 0, 1)}, s);
  };
  Run run = constant(1000, 4000, 2000);
  auto rank = metrics::power_dominance(run, metrics::full_window(run));
  REQUIRE(rank.size() == 3);
  CHECK(rank[0].rail == Rail::gpu);
  CHECK(rank[1].rail == Rail::mem);
  CHECK(rank[2].rail == Rail::cpu);
  CHECK(*rank[0].share_of_sys == Approx(4000.0 / 7500.0));

  Run lstm = constant(1000, 1500, 2500);
  CHECK(metrics::power_dominance(lstm, metrics::full_window(lstm))[0].rail == Rail::mem);

  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    Run r = random_run(rng, 5);
    auto t = times_of(r);
    std::map<Rail, double> oracle;
    for (Rail rail : kComponentRails) {
      std::vector<double> v;
      for (const auto& s : r.samples) v.push_back(s.power_mw(rail));
      oracle[rail] = weighted_mean(t, v, r.meta.sample_interval_us);
    }
    auto got = metrics::power_dominance(r, metrics::full_window(r));
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(rel_close(got[i].mean_mw, oracle[got[i].rail], 1e-12));
      if (i > 0) CHECK(got[i - 1].mean_mw >= got[i].mean_mw);
    }
  }
}

TEST_CASE("report on a run with only warmup steps") {
  Run run = series_run(std::vector<double>(30, 0.5), std::vector<double>(30, 100.0));
  auto w = equal_steps(3, 100'000, 3);
  try {
    metrics::build_report(run, w);
    FAIL("expected AnalysisError");
  } catch (const AnalysisError& e) {
    CHECK(e.has(ErrorCode::NoCompleteSteps));
    CHECK(e.has(ErrorCode::NoSamplesInWindow));
  }
}

TEST_CASE("report basics") {
  std::vector<double> util(40);
  for (std::size_t i = 0; i < util.size(); ++i) util[i] = (i % 10) < 6 ? 1.0 : 0.0;
  Run run = series_run(util, std::vector<double>(40, 1000.0));
  auto w = equal_steps(4, 100'000, 1);
  auto a = metrics::build_report(run, w);
  auto b = metrics::build_report(run, w);
  CHECK(a == b);
  CHECK(a.gpu_util == Approx(0.6).epsilon(1e-15));
  CHECK(a.analysis_sample_count == 30);
  CHECK(a.analysis_window_us == 300'000);
  CHECK(a.throughput_samples_per_sec == 10.0);
  CHECK(a.per_step.size() == 4);
  CHECK(a.per_step[0].is_warmup);
  CHECK(*a.energy_per_step_joules(Rail::sys) == Approx(0.1).epsilon(1e-15));
  CHECK(a.energy_by_rail_joules.at(Rail::sys) == Approx(0.3).epsilon(1e-15));
  CHECK(a.per_op.at("op").attributed_samples == 40);
  CHECK(a.per_op.at("op").count == 1);
}
