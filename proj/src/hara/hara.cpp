#include "ixda/hara/hara.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace ixda::hara {

using nlohmann::json;

const char* to_string(GuideWord g) {
  switch (g) {
    case GuideWord::LossOfFunction: return "LossOfFunction";
    case GuideWord::MoreThanIntended: return "MoreThanIntended";
    case GuideWord::LessThanIntended: return "LessThanIntended";
    case GuideWord::Intermittent: return "Intermittent";
  }
  return "?";
}

const char* to_string(Subsystem s) {
  switch (s) {
    case Subsystem::Vehicle: return "Vehicle";
    case Subsystem::IX: return "IX";
    case Subsystem::HMI: return "HMI";
  }
  return "?";
}

const char* to_string(Asil a) {
  switch (a) {
    case Asil::QM: return "QM";
    case Asil::A: return "A";
    case Asil::B: return "B";
    case Asil::C: return "C";
    case Asil::D: return "D";
  }
  return "?";
}

const char* to_string(Allocation a) {
  switch (a) {
    case Allocation::Vehicle: return "Vehicle";
    case Allocation::IX: return "IX";
    case Allocation::Joint: return "Joint";
  }
  return "?";
}

std::optional<GuideWord> guide_word_from_string(std::string_view s) {
  for (auto g : kGuideWords) {
    if (s == to_string(g)) {
      return g;
    }
  }
  return std::nullopt;
}

std::optional<Asil> asil_from_string(std::string_view s) {
  for (auto a : {Asil::QM, Asil::A, Asil::B, Asil::C, Asil::D}) {
    if (s == to_string(a)) {
      return a;
    }
  }
  return std::nullopt;
}

void validate(const SecClass& sec) {
  if (sec.s < 0 || sec.s > 3 || sec.e < 0 || sec.e > 4 || sec.c < 0 || sec.c > 3) {
    throw HaraError("S/E/C class out of range: S" + std::to_string(sec.s) + " E" +
                    std::to_string(sec.e) + " C" + std::to_string(sec.c));
  }
}

Asil determine_asil(const SecClass& sec) {
  validate(sec);
  if (sec.s == 0 || sec.e == 0 || sec.c == 0) {
    return Asil::QM;
  }
  switch (sec.s + sec.e + sec.c) {
    case 10: return Asil::D;
    case 9: return Asil::C;
    case 8: return Asil::B;
    case 7: return Asil::A;
    default: return Asil::QM;
  }
}

std::vector<HazardousEvent> derive_hazards(const std::vector<FunctionalRequirement>& requirements,
                                           const std::vector<CurationRule>& rules) {
  std::vector<HazardousEvent> out;
  for (const auto& req : requirements) {
    for (GuideWord g : kGuideWords) {
      if (std::find(req.guide_words.begin(), req.guide_words.end(), g) == req.guide_words.end()) {
        continue;
      }
      for (const auto& rule : rules) {
        if (rule.requirement == req.id && rule.guide_word == g) {
          out.push_back({rule.hazard_id, req.id, g, rule.cause, rule.event});
        }
      }
    }
  }
  // H10 after H9: compare the numeric suffix when both ids share the prefix.
  std::stable_sort(out.begin(), out.end(), [](const HazardousEvent& a, const HazardousEvent& b) {
    if (a.id.size() != b.id.size()) {
      return a.id.size() < b.id.size();
    }
    return a.id < b.id;
  });
  return out;
}

SafetyGoal assess_goal(const SafetyGoalDef& goal, const SecTable& table) {
  const auto it = table.find(goal.id);
  if (it == table.end()) {
    throw HaraError("sec_table has no entry for goal " + goal.id);
  }
  for (const char* cell : kCanonicalScenarios) {
    if (!it->second.contains(cell)) {
      throw HaraError("sec_table entry for " + goal.id + " is missing scenario " + cell);
    }
  }
  SafetyGoal out{goal.id, goal.text, {}, Asil::QM, goal.allocation};
  for (const auto& [cell, sec] : it->second) {
    const Asil a = determine_asil(sec);
    out.per_scenario[cell] = a;
    out.worst_case = std::max(out.worst_case, a);
  }
  return out;
}

std::optional<ReportFormat> report_format_from_string(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  return std::nullopt;
}

namespace {

// Canonical cells first, then any extra cells in lexicographic order.
std::vector<std::string> scenario_columns(const std::vector<SafetyGoal>& goals) {
  std::vector<std::string> cols(std::begin(kCanonicalScenarios), std::end(kCanonicalScenarios));
  std::set<std::string> extra;
  for (const auto& g : goals) {
    for (const auto& [cell, _] : g.per_scenario) {
      if (std::find(cols.begin(), cols.end(), cell) == cols.end()) {
        extra.insert(cell);
      }
    }
  }
  cols.insert(cols.end(), extra.begin(), extra.end());
  return cols;
}

std::string cell_text(const SafetyGoal& g, const std::string& col) {
  const auto it = g.per_scenario.find(col);
  return it == g.per_scenario.end() ? "-" : to_string(it->second);
}

const char* allocation_label(Allocation a) {
  return a == Allocation::Joint ? "IX / Vehicle" : to_string(a);
}

std::string render_markdown(const std::vector<HazardousEvent>& hazards,
                            const std::vector<SafetyGoal>& goals) {
  std::ostringstream os;
  os << "# Hazard Analysis and Risk Assessment\n\n";
  os << "## Identified Hazards\n\n";
  os << "| ID | Cause | Hazardous Event |\n";
  os << "|----|-------|-----------------|\n";
  for (const auto& h : hazards) {
    os << "| " << h.id << " | " << h.cause << " | " << h.event << " |\n";
  }
  os << "\n### Derivation\n\n";
  os << "| ID | Requirement | Guide Word |\n";
  os << "|----|-------------|------------|\n";
  for (const auto& h : hazards) {
    os << "| " << h.id << " | " << h.requirement << " | " << to_string(h.guide_word) << " |\n";
  }
  const auto cols = scenario_columns(goals);
  os << "\n## Safety Goals and ASIL Ratings\n\n";
  os << "| Goal | Description |";
  for (const auto& c : cols) {
    os << ' ' << c << " |";
  }
  os << " Worst | Assigned To |\n";
  os << "|------|-------------|";
  for (std::size_t i = 0; i < cols.size(); ++i) {
    os << "---|";
  }
  os << "---|---|\n";
  for (const auto& g : goals) {
    os << "| " << g.id << " | " << g.text << " |";
    for (const auto& c : cols) {
      os << ' ' << cell_text(g, c) << " |";
    }
    os << ' ' << to_string(g.worst_case) << " | " << allocation_label(g.allocation) << " |\n";
  }
  return os.str();
}

std::string render_csv(const std::vector<SafetyGoal>& goals) {
  const auto cols = scenario_columns(goals);
  std::ostringstream os;
  os << "id";
  for (const auto& c : cols) {
    os << ',' << c;
  }
  os << ",worst,allocation\n";
  for (const auto& g : goals) {
    os << g.id;
    for (const auto& c : cols) {
      os << ',' << cell_text(g, c);
    }
    os << ',' << to_string(g.worst_case) << ',' << to_string(g.allocation) << '\n';
  }
  return os.str();
}

std::string render_json(const std::vector<HazardousEvent>& hazards,
                        const std::vector<SafetyGoal>& goals) {
  json doc;
  doc["hazards"] = json::array();
  for (const auto& h : hazards) {
    doc["hazards"].push_back({{"id", h.id},
                              {"requirement", h.requirement},
                              {"guide_word", to_string(h.guide_word)},
                              {"cause", h.cause},
                              {"event", h.event}});
  }
  doc["goals"] = json::array();
  for (const auto& g : goals) {
    json asil = json::object();
    for (const auto& [cell, a] : g.per_scenario) {
      asil[cell] = to_string(a);
    }
    doc["goals"].push_back({{"id", g.id},
                            {"text", g.text},
                            {"asil", asil},
                            {"worst", to_string(g.worst_case)},
                            {"allocation", to_string(g.allocation)}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace

std::string render_report(const std::vector<HazardousEvent>& hazards,
                          const std::vector<SafetyGoal>& goals, ReportFormat format) {
  switch (format) {
    case ReportFormat::Markdown: return render_markdown(hazards, goals);
    case ReportFormat::Csv: return render_csv(goals);
    case ReportFormat::Json: return render_json(hazards, goals);
  }
  throw HaraError("unknown report format");
}

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw HaraError(path + ": missing key '" + key + "'");
  }
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const auto& v = require(obj, key, path);
  if (!v.is_string()) {
    throw HaraError(path + "/" + key + ": expected a string");
  }
  return v.get<std::string>();
}

const json& require_array(const json& doc, const char* key) {
  const auto& v = require(doc, key, "");
  if (!v.is_array()) {
    throw HaraError(std::string("/") + key + ": expected an array");
  }
  return v;
}

GuideWord parse_guide_word(const json& v, const std::string& path) {
  if (!v.is_string()) {
    throw HaraError(path + ": expected a guide word string");
  }
  const auto g = guide_word_from_string(v.get<std::string>());
  if (!g) {
    throw HaraError(path + ": unknown guide word '" + v.get<std::string>() + "'");
  }
  return *g;
}

int parse_class(const json& v, char letter, int max, const std::string& path) {
  if (!v.is_string() || v.get<std::string>().size() != 2 || v.get<std::string>()[0] != letter) {
    throw HaraError(path + ": expected " + letter + "0.." + letter + std::to_string(max));
  }
  const int n = v.get<std::string>()[1] - '0';
  if (n < 0 || n > max) {
    throw HaraError(path + ": class out of range");
  }
  return n;
}

}  // namespace

std::vector<FunctionalRequirement> parse_requirements(const json& doc) {
  std::vector<FunctionalRequirement> out;
  std::set<std::string> ids;
  const auto& arr = require_array(doc, "requirements");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "/requirements/" + std::to_string(i);
    const auto& r = arr[i];
    FunctionalRequirement req;
    req.id = require_string(r, "id", path);
    if (!ids.insert(req.id).second) {
      throw HaraError(path + "/id: duplicate requirement id '" + req.id + "'");
    }
    const auto sub = require_string(r, "subsystem", path);
    if (sub == "Vehicle") req.subsystem = Subsystem::Vehicle;
    else if (sub == "IX") req.subsystem = Subsystem::IX;
    else if (sub == "HMI") req.subsystem = Subsystem::HMI;
    else throw HaraError(path + "/subsystem: unknown subsystem '" + sub + "'");
    req.function = require_string(r, "function", path);
    req.text = require_string(r, "text", path);
    const auto& gws = require(r, "guide_words", path);
    if (!gws.is_array()) {
      throw HaraError(path + "/guide_words: expected an array");
    }
    for (std::size_t j = 0; j < gws.size(); ++j) {
      req.guide_words.push_back(parse_guide_word(gws[j], path + "/guide_words/" + std::to_string(j)));
    }
    out.push_back(std::move(req));
  }
  return out;
}

std::vector<CurationRule> parse_rules(const json& doc) {
  std::vector<CurationRule> out;
  const auto& arr = require_array(doc, "rules");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "/rules/" + std::to_string(i);
    const auto& r = arr[i];
    out.push_back({require_string(r, "requirement", path),
                   parse_guide_word(require(r, "guide_word", path), path + "/guide_word"),
                   require_string(r, "hazard", path), require_string(r, "cause", path),
                   require_string(r, "event", path)});
  }
  return out;
}

std::vector<SafetyGoalDef> parse_goals(const json& doc) {
  std::vector<SafetyGoalDef> out;
  const auto& arr = require_array(doc, "goals");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "/goals/" + std::to_string(i);
    const auto& g = arr[i];
    SafetyGoalDef def{require_string(g, "id", path), require_string(g, "text", path),
                      Allocation::Vehicle};
    const auto alloc = require_string(g, "allocation", path);
    if (alloc == "Vehicle") def.allocation = Allocation::Vehicle;
    else if (alloc == "IX") def.allocation = Allocation::IX;
    else if (alloc == "Joint") def.allocation = Allocation::Joint;
    else throw HaraError(path + "/allocation: unknown allocation '" + alloc + "'");
    out.push_back(std::move(def));
  }
  return out;
}

SecTable parse_sec_table(const json& doc) {
  SecTable table;
  const auto& goals = require(doc, "sec_table", "");
  if (!goals.is_object()) {
    throw HaraError("/sec_table: expected an object keyed by goal id");
  }
  for (const auto& [goal, cells] : goals.items()) {
    const std::string gpath = "/sec_table/" + goal;
    if (!cells.is_object()) {
      throw HaraError(gpath + ": expected an object keyed by scenario cell");
    }
    for (const auto& [cell, sec] : cells.items()) {
      const std::string path = gpath + "/" + cell;
      SecClass c{parse_class(require(sec, "S", path), 'S', 3, path + "/S"),
                 parse_class(require(sec, "E", path), 'E', 4, path + "/E"),
                 parse_class(require(sec, "C", path), 'C', 3, path + "/C")};
      table[goal][cell] = c;
    }
  }
  return table;
}

json sec_table_to_json(const SecTable& table) {
  json cells = json::object();
  for (const auto& [goal, row] : table) {
    for (const auto& [cell, sec] : row) {
      cells[goal][cell] = {{"S", "S" + std::to_string(sec.s)},
                           {"E", "E" + std::to_string(sec.e)},
                           {"C", "C" + std::to_string(sec.c)}};
    }
  }
  return json{{"sec_table", cells}};
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw HaraError("cannot open " + path);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw HaraError(path + ": " + e.what());
  }
}

}  // namespace

Catalog load_catalog(const std::string& dir) {
  Catalog c;
  c.requirements = parse_requirements(read_json_file(dir + "/requirements.json"));
  c.rules = parse_rules(read_json_file(dir + "/rules.json"));
  c.goals = parse_goals(read_json_file(dir + "/goals.json"));
  c.sec_table = parse_sec_table(read_json_file(dir + "/sec_table.json"));
  return c;
}

Assessment assess(const Catalog& catalog) {
  Assessment a;
  a.hazards = derive_hazards(catalog.requirements, catalog.rules);
  for (const auto& g : catalog.goals) {
    a.goals.push_back(assess_goal(g, catalog.sec_table));
  }
  return a;
}

}  // namespace ixda::hara
