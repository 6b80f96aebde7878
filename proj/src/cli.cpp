#include "stepscope/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "stepscope/ingest.hpp"
#include "stepscope/pipeline.hpp"
#include "stepscope/report_io.hpp"
#include "stepscope/synth.hpp"

namespace stepscope::cli {
namespace {

namespace fs = std::filesystem;

void print_diagnostics(const Diagnostics& diags, std::ostream& err) {
  for (const auto& d : diags) err << d.render() << "\n";
}

int exit_for(const AnalysisError& e) {
  return e.has(ErrorCode::UsageError) ? kExitUsage : kExitFailure;
}

struct AnalyzeArgs {
  std::string manifest;
  std::string format = "json";
  std::optional<std::int64_t> warmup;
  std::string signal = "gpu_util";
  double idle_threshold = 0.0;
};

struct SweepArgs {
  std::string manifest;
  std::string format = "json";
  std::optional<std::int64_t> warmup;
  std::string signal = "gpu_util";
  std::string rail = "sys";
  std::optional<std::uint64_t> capacity;
};

struct SynthArgs {
  std::string out_dir;
  std::string spec_path;
  std::string stem = "run";
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  bool random = false;
  bool strip_step_ids = false;
};

int cmd_validate(const std::string& manifest, std::ostream& out,
                 std::ostream& err) {
  auto loaded = ingest::load_run(manifest);
  print_diagnostics(loaded.diagnostics, err);
  if (!loaded.run) {
    err << fmt::format("FAILED: {} error(s)\n", count_errors(loaded.diagnostics));
    return kExitFailure;
  }
  const Run& run = *loaded.run;
  out << fmt::format("OK {}: {} ops, {} samples, {} cores, {:.3f} s\n",
                     run.meta.run_id, run.ops.size(), run.samples.size(),
                     run.meta.core_count,
                     static_cast<double>(run.duration_us()) / 1e6);
  return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  auto format = ingest::report_format_from_string(a.format);
  auto signal = steps::signal_from_string(a.signal);
  auto loaded = ingest::load_run(a.manifest);
  print_diagnostics(loaded.diagnostics, err);
  if (!loaded.run) return kExitFailure;
  try {
    pipeline::AnalyzeOptions opts;
    opts.warmup_steps = a.warmup;
    opts.signal = *signal;
    opts.idle_threshold = a.idle_threshold;
    auto report = pipeline::analyze(*loaded.run, opts);
    out << ingest::write_report(report, *format);
  } catch (const AnalysisError& e) {
    err << "error: " << e.what() << "\n";
    return exit_for(e);
  }
  return kExitOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  auto format = ingest::report_format_from_string(a.format);
  auto loaded = ingest::load_sweep_manifest(a.manifest);
  print_diagnostics(loaded.diagnostics, err);
  if (has_errors(loaded.diagnostics)) return kExitFailure;
  if (loaded.entries.size() < 2) {
    err << fmt::format("error: sweep needs at least 2 runs, manifest lists {}\n",
                       loaded.entries.size());
    return kExitUsage;
  }
  try {
    pipeline::SweepOptions opts;
    opts.analyze.warmup_steps = a.warmup;
    opts.analyze.signal = *steps::signal_from_string(a.signal);
    opts.rail = *rail_from_string(a.rail);
    opts.capacity_bytes = a.capacity;
    auto result = pipeline::run_sweep(loaded.entries, opts);
    out << ingest::write_report(result, *format);
  } catch (const AnalysisError& e) {
    err << "error: " << e.what() << "\n";
    return exit_for(e);
  }
  return kExitOk;
}

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  try {
    synth::SynthSpec spec;
    if (!a.spec_path.empty()) {
      auto text = ingest::read_file(a.spec_path);
      if (!text) {
        err << fmt::format("error: cannot read spec '{}'\n", a.spec_path);
        return kExitFailure;
      }
      spec = synth::spec_from_json(*text);
    } else if (a.random) {
      spec = synth::random_spec(a.seed.value_or(0));
    } else {
      spec = synth::default_spec();
    }
    if (a.seed) spec.seed = *a.seed;
    if (a.noise) spec.noise_amplitude = *a.noise;
    if (a.strip_step_ids) spec.strip_step_ids = true;

    auto generated = synth::generate(spec);
    auto check = validate_run(generated.run);
    if (!check.ok()) {
      print_diagnostics(check.diagnostics, err);
      return kExitFailure;
    }
    fs::path dir(a.out_dir);
    auto manifest = ingest::write_run_files(*check.run, dir, a.stem);
    std::ofstream(dir / (a.stem + ".truth.json"), std::ios::binary)
        << synth::truth_to_json(generated.truth);
    std::ofstream(dir / (a.stem + ".spec.json"), std::ios::binary)
        << synth::spec_to_json(spec);
    out << manifest.string() << "\n";
  } catch (const AnalysisError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Correlates op timelines with hardware telemetry and reports "
               "training-step metrics."};
  app.name("stepscope");
  app.require_subcommand(1);

  const std::vector<std::string> formats = {"json", "table"};
  const std::vector<std::string> signals = {"gpu_util", "cpu_avg_util",
                                            "power_sys"};

  std::string validate_manifest;
  auto* validate = app.add_subcommand("validate", "Check a run manifest and its traces");
  validate->add_option("manifest", validate_manifest, "Run manifest (JSON)")
      ->required();

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Compute the metric report for one run");
  analyze->add_option("manifest", analyze_args.manifest, "Run manifest (JSON)")
      ->required();
  analyze->add_option("--format", analyze_args.format, "json or table")
      ->check(CLI::IsMember(formats));
  analyze->add_option("--warmup", analyze_args.warmup,
                      "Leading steps to exclude (default: manifest value)")
      ->check(CLI::NonNegativeNumber);
  analyze->add_option("--signal", analyze_args.signal,
                      "Signal for period detection and predictability")
      ->check(CLI::IsMember(signals));
  analyze->add_option("--idle-threshold", analyze_args.idle_threshold,
                      "Utilization at or below which a core counts as idle")
      ->check(CLI::Range(0.0, 1.0));

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Compare runs of one model across batch sizes");
  sweep->add_option("manifest", sweep_args.manifest, "Sweep manifest (JSON array)")
      ->required();
  sweep->add_option("--format", sweep_args.format, "json or table")
      ->check(CLI::IsMember(formats));
  sweep->add_option("--warmup", sweep_args.warmup, "Leading steps to exclude")
      ->check(CLI::NonNegativeNumber);
  sweep->add_option("--signal", sweep_args.signal, "Periodicity signal")
      ->check(CLI::IsMember(signals));
  sweep->add_option("--rail", sweep_args.rail, "Rail for energy scaling")
      ->check(CLI::IsMember({"cpu", "gpu", "mem", "sys"}));
  sweep->add_option("--capacity-bytes", sweep_args.capacity,
                    "Device memory capacity (default: from manifests)");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write a synthetic run with known metrics");
  synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("--spec", synth_args.spec_path, "Synthetic spec (JSON)");
  synth->add_option("--stem", synth_args.stem, "Output file stem");
  synth->add_option("--seed", synth_args.seed, "Noise seed");
  synth->add_option("--noise", synth_args.noise, "Uniform noise amplitude")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_flag("--random", synth_args.random,
                  "Use a random spec derived from --seed");
  synth->add_flag("--strip-step-ids", synth_args.strip_step_ids,
                  "Omit step ids so steps must be inferred");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*validate) return cmd_validate(validate_manifest, out, err);
  if (*analyze) return cmd_analyze(analyze_args, out, err);
  if (*sweep) return cmd_sweep(sweep_args, out, err);
  if (*synth) return cmd_synth(synth_args, out, err);
  return kExitUsage;
}

}  // namespace stepscope::cli
