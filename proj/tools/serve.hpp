#pragma once

#include <string>

#include "json.hpp"
#include "ixda/scenario.hpp"

namespace ixda {

class Simulation;

/// Applies one service command to the simulation, on the simulation thread.
/// Returns {accepted, reason} plus a "log" entry when the command changed
/// state and belongs in the replayable command log.
nlohmann::json apply_service_command(Simulation& sim, const nlohmann::json& cmd, bool& paused);

/// Runs `cfg` in real time (one tick per 100 ms) behind REST and WebSocket
/// endpoints until interrupted. Writes the trace and the inbound command log
/// under `out_dir`.
int serve(const ScenarioConfig& cfg, const std::string& bind, const std::string& out_dir = "out");

}  // namespace ixda
