#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ixda/safety.hpp"
#include "ixda/scenario.hpp"

namespace ixda {

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> duration_s;
  TraceVerbosity verbosity = TraceVerbosity::Compact;
  std::ostream* trace_sink = nullptr;
  bool rolling_buffer = false;
};

/// Outcome of one headless run; written next to the trace.
struct RunResult {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string trace_hash;
  MonitorReport report;
  int collisions = 0;
  double wall_s = 0.0;
};

ScenarioConfig apply_overrides(ScenarioConfig cfg, const RunOptions& opts);
RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {});
nlohmann::json to_json(const RunResult& r);

/// One (hazard, variant) row of the hazard-pair suite.
struct SuiteRow {
  HazardId hazard = HazardId::H1;
  bool mitigated = true;
  int seeds = 0;
  int collisions = 0;
  /// Seeds with a collision or a failed safety goal.
  std::vector<std::uint64_t> violating_seeds;
  /// Mitigated: no seed violates. Unmitigated: at least one seed violates.
  bool pass = false;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  /// FNV-1a over every run's terminal hash, in row then seed order.
  std::string aggregate_hash;
  double wall_s = 0.0;
  bool pass() const;
};

/// Pair files are <dir>/h<N>_mitigated.json and <dir>/h<N>_unmitigated.json.
std::string pair_path(const std::string& dir, HazardId h, bool mitigated);

/// Runs every pair over seeds first_seed .. first_seed+seeds-1, in parallel.
SuiteResult run_suite(const std::string& dir, int seeds, std::uint64_t first_seed = 1, unsigned threads = 0);

nlohmann::json to_json(const SuiteResult& r);
std::string to_text(const SuiteResult& r);

}  // namespace ixda
