#include <doctest.h>

#include <random>

#include "stepscope/correlate.hpp"
#include "support.hpp"

using namespace stepscope;
using namespace stepscope::testing;

TEST_CASE("overlapping ops share a sample") {
  Run run = make_run(make_meta(1, 25),
                     {make_op("A", Device::GPU, 0, 100),
                      make_op("B", Device::GPU, 50, 150)},
                     {make_sample(75, {0}), make_sample(200, {0})});
  auto attr = correlate::attribute_samples(run, {});
  REQUIRE(attr.size() == 2);
  CHECK(attr[0].op_indices == std::vector<std::size_t>{0, 1});
  CHECK(attr[1].op_indices.empty());
  CHECK_FALSE(attr[0].step_id);
}

TEST_CASE("intervals are half-open") {
  Run run = make_run(make_meta(1, 10),
                     {make_op("A", Device::GPU, 10, 20)},
                     {make_sample(0, {0}), make_sample(10, {0}), make_sample(20, {0})});
  auto attr = correlate::attribute_samples(run, {});
  CHECK(attr[0].op_indices.empty());
  CHECK(attr[1].op_indices == std::vector<std::size_t>{0});
  CHECK(attr[2].op_indices.empty());
}

TEST_CASE("samples map to step windows") {
  Run run = make_run(make_meta(1, 10),
                     {make_op("A", Device::GPU, 0, 40)},
                     {make_sample(0, {0}), make_sample(15, {0}), make_sample(25, {0}),
                      make_sample(45, {0})});
  std::vector<StepWindow> w = {{0, Timestamp{0}, Timestamp{10}, false},
                               {1, Timestamp{20}, Timestamp{40}, false}};
  auto attr = correlate::attribute_samples(run, w);
  CHECK(attr[0].step_id == 0);
  CHECK_FALSE(attr[1].step_id);
  CHECK(attr[2].step_id == 1);
  CHECK_FALSE(attr[3].step_id);
  CHECK(correlate::find_step(w, Timestamp{39}) == 1u);
  CHECK_FALSE(correlate::find_step(w, Timestamp{40}));
}

TEST_CASE("busy time fixtures") {
  Run run = make_run(make_meta(1, 10),
                     {make_op("A", Device::GPU, 0, 100),
                      make_op("B", Device::GPU, 50, 150)},
                     {make_sample(0, {0})});
  CHECK(correlate::busy_time(run, Device::GPU) == 150);
  CHECK(correlate::busy_time(run, Device::CPU) == 0);
  CHECK(correlate::has_concurrent_ops(run));
}

TEST_CASE("attribution matches the brute-force oracle") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 10; ++trial) {
    Run run = random_run(rng, 1000);
    auto oracle = brute_force_attribution(run);
    auto attr = correlate::attribute_samples(run, {});
    REQUIRE(attr.size() == run.samples.size());
    for (std::size_t i = 0; i < attr.size(); ++i) {
      CHECK(attr[i].sample_index == i);
      CHECK(attr[i].op_indices == oracle[i]);
    }
  }
}

TEST_CASE("busy time matches the 1 us timeline") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    Run run = random_run(rng, 500);
    CHECK(correlate::busy_time(run, Device::GPU) == timeline_busy(run, Device::GPU));
    CHECK(correlate::busy_time(run, Device::CPU) == timeline_busy(run, Device::CPU));
  }
}
