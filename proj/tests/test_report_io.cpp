#include <doctest.h>

#include <json.hpp>

#include "stepscope/pipeline.hpp"
#include "stepscope/report_io.hpp"
#include "stepscope/synth.hpp"
#include "support.hpp"

using namespace stepscope;
using namespace stepscope::testing;
using ingest::ReportFormat;

namespace {

metrics::MetricReport noisy_report(std::uint64_t seed) {
  auto spec = synth::random_spec(seed);
  spec.noise_amplitude = 0.1;
  spec.seed = seed;
  return pipeline::analyze(synth::generate(spec).run);
}

}  // namespace

TEST_CASE("report json is deterministic and round-trips") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto report = noisy_report(seed);
    auto a = ingest::write_report(report, ReportFormat::json);
    auto b = ingest::write_report(noisy_report(seed), ReportFormat::json);
    CHECK(a == b);
    auto parsed = ingest::parse_report(a);
    CHECK(parsed == report);
    CHECK(ingest::write_report(parsed, ReportFormat::json) == a);
  }
}

TEST_CASE("empty per-op map serializes as an object") {
  metrics::MetricReport r;
  r.run_id = "empty";
  auto text = ingest::write_report(r, ReportFormat::json);
  auto j = nlohmann::json::parse(text);
  CHECK(j["per_op"].is_object());
  CHECK(j["per_op"].empty());
  CHECK(j["schema_version"] == ingest::kSchemaVersion);
  CHECK(ingest::parse_report(text) == r);
}

TEST_CASE("parse rejects the wrong document") {
  CHECK_THROWS_AS(ingest::parse_report("{"), AnalysisError);
  CHECK_THROWS_AS(ingest::parse_report(R"({"schema_version":1,"kind":"sweep_result"})"),
                  AnalysisError);
  CHECK_THROWS_AS(ingest::parse_report(R"({"schema_version":2,"kind":"metric_report"})"),
                  AnalysisError);
}

TEST_CASE("table output lists ops by busy time") {
  auto run = synth::generate(synth::default_spec());
  auto table = ingest::write_report(pipeline::analyze(run.run), ReportFormat::table);
  auto conv = table.find("Conv2D");
  auto load = table.find("DataLoad");
  REQUIRE(conv != std::string::npos);
  REQUIRE(load != std::string::npos);
  CHECK(conv < load);
  CHECK(table.find("throughput") != std::string::npos);
}

TEST_CASE("sweep json round-trips") {
  std::vector<sweep::SweepPoint> points;
  for (std::int64_t batch : {4, 16, 64}) {
    auto spec = synth::default_spec();
    spec.batch_size = batch;
    for (auto& p : spec.phases) p.power_gpu_mw *= 1.0 + static_cast<double>(batch) / 64;
    MemoryBreakdown mb;
    mb.intermediate_bytes = static_cast<std::uint64_t>(batch) * 1000;
    spec.memory_breakdown = mb;
    points.push_back({batch, pipeline::analyze(synth::generate(spec).run)});
  }
  auto result = sweep::build_sweep("m", points, 8'000'000'000ULL, Rail::gpu);
  auto text = ingest::write_report(result, ReportFormat::json);
  auto parsed = ingest::parse_sweep_result(text);
  CHECK(parsed == result);
  CHECK(ingest::write_report(parsed, ReportFormat::json) == text);
  CHECK_FALSE(ingest::write_report(result, ReportFormat::table).empty());
}
