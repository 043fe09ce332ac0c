// ixda: scenario runner, hazard suite, HARA report, trace replay and live service.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ixda/hara/hara.hpp"
#include "ixda/runner.hpp"
#include "ixda/scenario.hpp"
#include "serve.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

bool want_json(const std::string& format) {
  if (format != "text" && format != "json") {
    throw CLI::ValidationError("--format", "expected text or json");
  }
  return format == "json";
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, std::optional<double> duration,
            const std::string& format, const std::string& out_dir, const std::string& trace_mode) {
  const bool as_json = want_json(format);
  ixda::RunOptions opts;
  opts.seed = seed;
  opts.duration_s = duration;
  opts.verbosity = trace_mode == "full" ? ixda::TraceVerbosity::Full : ixda::TraceVerbosity::Compact;
  const ixda::ScenarioConfig cfg = ixda::apply_overrides(ixda::load_scenario_file(path), opts);

  fs::create_directories(out_dir);
  const std::string stem = cfg.name + "_s" + std::to_string(cfg.seed);
  const fs::path trace_path = fs::path(out_dir) / (stem + ".trace.ndjson");
  std::ofstream trace(trace_path, std::ios::binary);
  if (!trace) {
    throw std::runtime_error("cannot write " + trace_path.string());
  }
  opts.trace_sink = &trace;
  const ixda::RunResult r = ixda::run_scenario(cfg, opts);
  trace.close();
  json result = ixda::to_json(r);
  result["trace"] = trace_path.string();
  write_file(fs::path(out_dir) / (stem + ".result.json"), result.dump(2) + "\n");

  if (as_json) {
    std::cout << result.dump(2) << '\n';
  } else {
    std::cout << "scenario " << r.scenario << "  seed " << r.seed << "  hash " << r.trace_hash << '\n'
              << ixda::to_text(r.report) << "trace: " << trace_path.string() << '\n';
  }
  return r.report.all_pass() ? 0 : 1;
}

int cmd_suite(const std::string& dir, int seeds, std::uint64_t first_seed, unsigned threads,
              const std::string& format) {
  const bool as_json = want_json(format);
  const ixda::SuiteResult r = ixda::run_suite(dir, seeds, first_seed, threads);
  if (as_json) {
    std::cout << ixda::to_json(r).dump(2) << '\n';
  } else {
    std::cout << ixda::to_text(r);
  }
  return r.pass() ? 0 : 1;
}

int cmd_hara(const std::string& catalog_dir, const std::string& sec_table, const std::string& format,
             const std::string& output) {
  const auto fmt = ixda::hara::report_format_from_string(format);
  if (!fmt) {
    throw CLI::ValidationError("--format", "expected markdown, csv or json");
  }
  ixda::hara::Catalog catalog = ixda::hara::load_catalog(catalog_dir);
  if (!sec_table.empty()) {
    catalog.sec_table = ixda::hara::parse_sec_table(json::parse(read_file(sec_table)));
  }
  const auto a = ixda::hara::assess(catalog);
  const std::string doc = ixda::hara::render_report(a.hazards, a.goals, *fmt);
  if (output.empty()) {
    std::cout << doc;
  } else {
    write_file(output, doc);
  }
  return 0;
}

int cmd_replay(const std::string& path, const std::string& format) {
  const bool as_json = want_json(format);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  const ixda::TraceLog log = ixda::TraceLog::read(in);
  const ixda::MonitorReport report = ixda::evaluate_goals(log.records());
  if (as_json) {
    std::cout << json{{"trace", path}, {"records", log.records().size()}, {"trace_hash", log.hash_hex()},
                      {"report", ixda::to_json(report)}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "trace " << path << "  records " << log.records().size() << "  hash " << log.hash_hex() << '\n'
              << ixda::to_text(report);
  }
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Infrastructure-assisted automated driving depot simulator"};
  app.require_subcommand(1);
  const std::string data = IXDA_DATA_DIR;

  std::string format = "text";
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;

  auto* run = app.add_subcommand("run", "Simulate a scenario and check the safety goals");
  std::string scenario = data + "/scenarios/ns_controlled.json";
  std::string out_dir = "out";
  std::string trace_mode = "compact";
  run->add_option("scenario", scenario, "Scenario file")->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--duration", duration, "Override the duration in seconds");
  run->add_option("--format", format, "text or json");
  run->add_option("--out", out_dir, "Directory for the trace and result files");
  run->add_option("--trace", trace_mode, "compact or full")->check(CLI::IsMember({"compact", "full"}));

  auto* suite = app.add_subcommand("suite", "Run every hazard pair over many seeds");
  std::string suite_dir = data + "/scenarios/suite";
  int seeds = 50;
  std::uint64_t first_seed = 1;
  unsigned threads = 0;
  suite->add_option("--dir", suite_dir, "Directory of hazard-pair scenarios")->check(CLI::ExistingDirectory);
  suite->add_option("--seeds", seeds, "Seeds per scenario")->check(CLI::PositiveNumber);
  suite->add_option("--seed", first_seed, "First seed");
  suite->add_option("--threads", threads, "Worker threads (0 = all cores)");
  suite->add_option("--format", format, "text or json");

  auto* hara = app.add_subcommand("hara", "Emit the hazard analysis and risk assessment report");
  std::string catalog = data + "/hara";
  std::string sec_table;
  std::string hara_format = "markdown";
  std::string output;
  hara->add_option("--catalog", catalog, "Catalog directory")->check(CLI::ExistingDirectory);
  hara->add_option("--sec-table", sec_table, "Replacement S/E/C table")->check(CLI::ExistingFile);
  hara->add_option("--format", hara_format, "markdown, csv or json");
  hara->add_option("--output", output, "Write to a file instead of stdout");

  auto* replay = app.add_subcommand("replay", "Re-check the safety goals on a recorded trace");
  std::string trace_file;
  replay->add_option("trace", trace_file, "NDJSON trace")->required()->check(CLI::ExistingFile);
  replay->add_option("--format", format, "text or json");

  auto* serve = app.add_subcommand("serve", "Run a scenario in real time behind REST and WebSocket endpoints");
  std::string bind = "127.0.0.1:8080";
  serve->add_option("scenario", scenario, "Scenario file")->check(CLI::ExistingFile);
  serve->add_option("--bind", bind, "host:port");
  serve->add_option("--seed", seed, "Override the scenario seed");
  serve->add_option("--duration", duration, "Override the duration in seconds");
  serve->add_option("--out", out_dir, "Directory for the trace and command log");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(scenario, seed, duration, format, out_dir, trace_mode);
    if (*suite) return cmd_suite(suite_dir, seeds, first_seed, threads, format);
    if (*hara) return cmd_hara(catalog, sec_table, hara_format, output);
    if (*replay) return cmd_replay(trace_file, format);
    if (*serve) {
      ixda::RunOptions o;
      o.seed = seed;
      o.duration_s = duration;
      return ixda::serve(ixda::apply_overrides(ixda::load_scenario_file(scenario), o), bind, out_dir);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
