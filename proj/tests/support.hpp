#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "ixda/scenario.hpp"

namespace ixda::test {

inline std::string data_path(const std::string& rel) { return std::string(IXDA_DATA_DIR) + "/" + rel; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json scenario_json(const std::string& name) {
  return nlohmann::json::parse(read_file(data_path("scenarios/" + name)));
}

inline ScenarioConfig scenario(const std::string& name) { return load_scenario_file(data_path("scenarios/" + name)); }

}  // namespace ixda::test
