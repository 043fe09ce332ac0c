#include "ixda/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "ixda/sim.hpp"

namespace ixda {

using nlohmann::json;

ScenarioConfig apply_overrides(ScenarioConfig cfg, const RunOptions& opts) {
  if (opts.seed) {
    cfg.seed = *opts.seed;
  }
  if (opts.duration_s) {
    if (!(*opts.duration_s > 0.0)) {
      throw std::invalid_argument("duration must be positive");
    }
    cfg.duration_s = *opts.duration_s;
  }
  return cfg;
}

RunResult run_scenario(const ScenarioConfig& base, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig cfg = apply_overrides(base, opts);
  Simulation sim(cfg, {opts.verbosity, opts.trace_sink, opts.rolling_buffer});
  sim.run_to_end();
  RunResult r;
  r.scenario = cfg.name;
  r.seed = cfg.seed;
  r.trace_hash = sim.trace().hash_hex();
  r.report = sim.report();
  r.collisions = sim.collisions();
  r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

json to_json(const RunResult& r) {
  return {{"scenario", r.scenario}, {"seed", r.seed},        {"trace_hash", r.trace_hash},
          {"report", to_json(r.report)}, {"collisions", r.collisions}, {"wall_s", r.wall_s},
          {"pass", r.report.all_pass()}};
}

bool SuiteResult::pass() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const SuiteRow& r) { return r.pass; });
}

std::string pair_path(const std::string& dir, HazardId h, bool mitigated) {
  std::string id = to_string(h);
  std::transform(id.begin(), id.end(), id.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return dir + "/" + id + (mitigated ? "_mitigated.json" : "_unmitigated.json");
}

SuiteResult run_suite(const std::string& dir, int seeds, std::uint64_t first_seed, unsigned threads) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Job {
    std::size_t row;
    std::uint64_t seed;
  };
  std::vector<ScenarioConfig> configs;
  SuiteResult out;
  for (auto h : {HazardId::H1, HazardId::H2, HazardId::H3, HazardId::H4, HazardId::H5, HazardId::H6, HazardId::H7,
                 HazardId::H8}) {
    for (bool mitigated : {true, false}) {
      configs.push_back(load_scenario_file(pair_path(dir, h, mitigated)));
      SuiteRow row;
      row.hazard = h;
      row.mitigated = mitigated;
      row.seeds = seeds;
      out.rows.push_back(row);
    }
  }
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    for (int s = 0; s < seeds; ++s) {
      jobs.push_back({r, first_seed + static_cast<std::uint64_t>(s)});
    }
  }
  std::vector<RunResult> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        RunOptions o;
        o.seed = jobs[i].seed;
        try {
          results[i] = run_scenario(configs[jobs[i].row], o);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
  std::ostringstream hashes;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i].empty()) {
      throw std::runtime_error("suite run " + pair_path(dir, out.rows[jobs[i].row].hazard, out.rows[jobs[i].row].mitigated) +
                               " seed " + std::to_string(jobs[i].seed) + " failed: " + errors[i]);
    }
    auto& row = out.rows[jobs[i].row];
    const auto& r = results[i];
    row.collisions += r.collisions;
    if (r.collisions > 0 || !r.report.all_pass()) {
      row.violating_seeds.push_back(jobs[i].seed);
    }
    hashes << r.trace_hash << '\n';
  }
  for (auto& row : out.rows) {
    row.pass = row.mitigated ? row.violating_seeds.empty() : !row.violating_seeds.empty();
  }
  const std::string all = hashes.str();
  std::ostringstream hex;
  hex << std::hex;
  hex.width(16);
  hex.fill('0');
  hex << fnv1a64(all);
  out.aggregate_hash = hex.str();
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

json to_json(const SuiteResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"hazard", to_string(row.hazard)},
                    {"variant", row.mitigated ? "mitigated" : "unmitigated"},
                    {"seeds", row.seeds},
                    {"collisions", row.collisions},
                    {"violating_seeds", row.violating_seeds},
                    {"pass", row.pass}});
  }
  return {{"rows", rows}, {"aggregate_hash", r.aggregate_hash}, {"wall_s", r.wall_s}, {"pass", r.pass()}};
}

std::string to_text(const SuiteResult& r) {
  std::ostringstream os;
  os << "hazard  variant      seeds  collisions  violating  result\n";
  for (const auto& row : r.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%-7s %-12s %5d  %10d  %9zu  %s\n", to_string(row.hazard),
                  row.mitigated ? "mitigated" : "unmitigated", row.seeds, row.collisions,
                  row.violating_seeds.size(), row.pass ? "PASS" : "FAIL");
    os << line;
  }
  os << "aggregate " << r.aggregate_hash << "  " << (r.pass() ? "PASS" : "FAIL") << '\n';
  return os.str();
}

}  // namespace ixda
