#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stepscope/cli.hpp"
#include "stepscope/ingest.hpp"
#include "stepscope/report_io.hpp"
#include "stepscope/synth.hpp"
#include "support.hpp"
#include "truth_check.hpp"

using namespace stepscope;
using namespace stepscope::testing;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path synth_run(const std::filesystem::path& dir,
                                const synth::SynthSpec& spec) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "spec.json") << synth::spec_to_json(spec);
  auto r = run({"synth", "--out", dir.string(), "--spec", (dir / "spec.json").string()});
  REQUIRE(r.code == 0);
  return dir / "run.manifest.json";
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("validate a good fixture") {
  auto dir = scratch_dir("cli-validate");
  auto manifest = synth_run(dir, synth::default_spec());
  auto r = run({"validate", manifest.string()});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("OK ", 0) == 0);
}

TEST_CASE("missing telemetry file") {
  auto dir = scratch_dir("cli-missing");
  auto manifest = synth_run(dir, synth::default_spec());
  std::filesystem::remove(dir / "run.telemetry.csv");
  auto r = run({"validate", manifest.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("run.telemetry.csv") != std::string::npos);
}

TEST_CASE("three malformed lines give three located diagnostics") {
  auto dir = scratch_dir("cli-malformed");
  auto manifest = synth_run(dir, synth::default_spec());
  auto ops = *ingest::read_file(dir / "run.ops.jsonl");
  std::istringstream in(ops);
  std::string line, edited;
  for (int n = 1; std::getline(in, line); ++n) {
    if (n == 2) line = "{not json";
    if (n == 5) line = R"({"op":"X","device":"TPU","start_us":0,"end_us":5})";
    if (n == 9) line = R"({"op":"X","device":"GPU","start_us":-1,"end_us":5})";
    edited += line + "\n";
  }
  write(dir / "run.ops.jsonl", edited);
  auto r = run({"validate", manifest.string()});
  CHECK(r.code == 1);
  for (const char* loc : {"run.ops.jsonl:2:", "run.ops.jsonl:5:", "run.ops.jsonl:9:"}) {
    CHECK(r.err.find(loc) != std::string::npos);
  }
  std::size_t errors = 0;
  for (std::size_t p = r.err.find(": error: "); p != std::string::npos;
       p = r.err.find(": error: ", p + 1)) {
    ++errors;
  }
  CHECK(errors == 3);
}

TEST_CASE("analyze matches ground truth and is byte-stable") {
  auto dir = scratch_dir("cli-analyze");
  auto spec = synth::random_spec(7);
  auto manifest = synth_run(dir, spec);
  auto a = run({"analyze", manifest.string(), "--format", "json"});
  auto b = run({"analyze", manifest.string(), "--format", "json"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  auto report = ingest::parse_report(a.out);
  CHECK(truth_mismatches(report, synth::ground_truth(spec)).empty());
  auto table = run({"analyze", manifest.string(), "--format", "table"});
  CHECK(table.code == 0);
}

TEST_CASE("warmup defaults to three and can be overridden") {
  auto dir = scratch_dir("cli-warmup");
  auto manifest = synth_run(dir, synth::default_spec());
  auto base = ingest::parse_report(run({"analyze", manifest.string()}).out);
  CHECK(base.warmup_steps == 3);
  CHECK(std::count_if(base.steps.begin(), base.steps.end(),
                      [](auto& s) { return s.is_warmup; }) == 3);
  auto zero = ingest::parse_report(run({"analyze", manifest.string(), "--warmup", "0"}).out);
  CHECK(zero.warmup_steps == 0);
  CHECK(zero.analysis_sample_count == 200);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"analyze"}).code == 2);
  CHECK(run({"analyze", "x.json", "--format", "xml"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"analyze", "--help"}).code == 0);
}

TEST_CASE("sweep needs two runs") {
  auto dir = scratch_dir("cli-sweep-one");
  auto manifest = synth_run(dir / "a", synth::default_spec());
  nlohmann::json sweep = nlohmann::json::array({{{"model", "m"}, {"manifest", "a/run.manifest.json"}}});
  write(dir / "sweep.json", sweep.dump());
  auto r = run({"sweep", (dir / "sweep.json").string()});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("ResNet-like sweep speedup") {
  auto dir = scratch_dir("cli-sweep-resnet");
  nlohmann::json sweep = nlohmann::json::array();
  for (auto [batch, step_us] : {std::pair{4, 444'000}, std::pair{64, 1'164'000}}) {
    auto spec = synth::default_spec();
    spec.run_id = "resnet50-b" + std::to_string(batch);
    spec.batch_size = batch;
    spec.step_duration_us = step_us;
    spec.sample_interval_us = 4'000;
    spec.phases.resize(1);
    spec.phases[0].fraction = 1.0;
    auto name = "b" + std::to_string(batch);
    synth_run(dir / name, spec);
    sweep.push_back({{"model", "ResNet50"}, {"manifest", name + "/run.manifest.json"}});
  }
  write(dir / "sweep.json", sweep.dump());
  auto r = run({"sweep", (dir / "sweep.json").string()});
  REQUIRE(r.code == 0);
  auto result = ingest::parse_sweep_result(r.out);
  CHECK(std::abs(result.throughput_speedup - 6.1) <= 0.05);
}

TEST_CASE("three-point synthetic sweep matches closed form") {
  auto dir = scratch_dir("cli-sweep-three");
  nlohmann::json sweep = nlohmann::json::array();
  std::map<std::int64_t, synth::GroundTruth> truth;
  for (std::int64_t batch : {4, 16, 64}) {
    auto spec = synth::default_spec();
    spec.batch_size = batch;
    spec.step_duration_us = 200'000 + 20'000 * (batch / 4);
    spec.phases[0].fraction = 0.5;
    spec.phases[1].fraction = 0.5;
    for (auto& p : spec.phases) {
      p.power_sys_mw += 50.0 * static_cast<double>(batch);
      p.gpu_util = std::min(1.0, p.gpu_util + 0.004 * static_cast<double>(batch));
    }
    auto name = "b" + std::to_string(batch);
    synth_run(dir / name, spec);
    truth[batch] = synth::ground_truth(spec);
    sweep.push_back({{"model", "Synth"}, {"manifest", name + "/run.manifest.json"}});
  }
  write(dir / "sweep.json", sweep.dump());
  auto r = run({"sweep", (dir / "sweep.json").string(), "--rail", "sys"});
  REQUIRE(r.code == 0);
  auto result = ingest::parse_sweep_result(r.out);
  const auto& lo = truth[4];
  const auto& hi = truth[64];
  CHECK(rel_close(result.throughput_speedup,
                  hi.throughput_samples_per_sec / lo.throughput_samples_per_sec, 1e-12));
  CHECK(rel_close(result.energy_scaling.energy_ratio,
                  hi.energy_per_step_joules.at(Rail::sys) / lo.energy_per_step_joules.at(Rail::sys),
                  1e-12));
  CHECK(result.energy_scaling.batch_ratio == 16.0);
  CHECK(std::abs(result.util_sensitivity.delta_gpu - (hi.gpu_util - lo.gpu_util)) <= 1e-12);
  CHECK(result.points.size() == 3);
  auto table = run({"sweep", (dir / "sweep.json").string(), "--format", "table"});
  CHECK(table.code == 0);
}

TEST_CASE("sweep rejects mixed models") {
  auto dir = scratch_dir("cli-sweep-mixed");
  synth_run(dir / "a", synth::default_spec());
  synth_run(dir / "b", synth::default_spec());
  nlohmann::json sweep = nlohmann::json::array({{{"model", "A"}, {"manifest", "a/run.manifest.json"}},
                                                {{"model", "B"}, {"manifest", "b/run.manifest.json"}}});
  write(dir / "sweep.json", sweep.dump());
  auto r = run({"sweep", (dir / "sweep.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("MixedModels") != std::string::npos);
}
