#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ixda::hara {

class HaraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GuideWord { LossOfFunction, MoreThanIntended, LessThanIntended, Intermittent };
inline constexpr GuideWord kGuideWords[] = {GuideWord::LossOfFunction, GuideWord::MoreThanIntended,
                                            GuideWord::LessThanIntended, GuideWord::Intermittent};

enum class Subsystem { Vehicle, IX, HMI };

/// Integrity levels in their total order QM < A < B < C < D.
enum class Asil { QM = 0, A = 1, B = 2, C = 3, D = 4 };

enum class Allocation { Vehicle, IX, Joint };

const char* to_string(GuideWord g);
const char* to_string(Subsystem s);
const char* to_string(Asil a);
const char* to_string(Allocation a);
std::optional<GuideWord> guide_word_from_string(std::string_view s);
std::optional<Asil> asil_from_string(std::string_view s);

/// Severity S0..S3, exposure E0..E4, controllability C0..C3.
struct SecClass {
  int s = 0;
  int e = 0;
  int c = 0;

  friend bool operator==(const SecClass&, const SecClass&) = default;
};

/// Throws HaraError when a class is out of range.
void validate(const SecClass& sec);

/// ASIL from the ISO 26262-3 determination matrix, via its additive closure:
/// any zero class gives QM, otherwise s+e+c of 10/9/8/7 gives D/C/B/A.
Asil determine_asil(const SecClass& sec);

struct FunctionalRequirement {
  std::string id;
  Subsystem subsystem = Subsystem::Vehicle;
  std::string function;  // short name, e.g. "vehicle braking"
  std::string text;
  std::vector<GuideWord> guide_words;
};

/// A hazard the analyst accepted for one (requirement, guide word) pair.
struct CurationRule {
  std::string requirement;
  GuideWord guide_word = GuideWord::LossOfFunction;
  std::string hazard_id;
  std::string cause;
  std::string event;
};

struct HazardousEvent {
  std::string id;
  std::string requirement;
  GuideWord guide_word = GuideWord::LossOfFunction;
  std::string cause;
  std::string event;

  friend bool operator==(const HazardousEvent&, const HazardousEvent&) = default;
};

/// Canonical scenario cells: "NS/C", "HS/C", "HS/UC" (and optional "NS/UC").
inline constexpr const char* kCanonicalScenarios[] = {"NS/C", "HS/C", "HS/UC"};

struct SafetyGoalDef {
  std::string id;
  std::string text;
  Allocation allocation = Allocation::Vehicle;
};

/// goal id -> scenario cell -> S/E/C.
using SecTable = std::map<std::string, std::map<std::string, SecClass>>;

struct SafetyGoal {
  std::string id;
  std::string text;
  std::map<std::string, Asil> per_scenario;
  Asil worst_case = Asil::QM;
  Allocation allocation = Allocation::Vehicle;
};

/// Cross product of each requirement with its applicable guide words, kept
/// where a curation rule names a hazard. Sorted by hazard id.
std::vector<HazardousEvent> derive_hazards(const std::vector<FunctionalRequirement>& requirements,
                                           const std::vector<CurationRule>& rules);

/// Rates one goal in every scenario cell present for it. Throws HaraError if a
/// canonical cell is missing.
SafetyGoal assess_goal(const SafetyGoalDef& goal, const SecTable& table);

enum class ReportFormat { Markdown, Csv, Json };
std::optional<ReportFormat> report_format_from_string(std::string_view s);

std::string render_report(const std::vector<HazardousEvent>& hazards,
                          const std::vector<SafetyGoal>& goals, ReportFormat format);

// Catalog I/O. Each parser throws HaraError with a JSON pointer on bad input.
std::vector<FunctionalRequirement> parse_requirements(const nlohmann::json& doc);
std::vector<CurationRule> parse_rules(const nlohmann::json& doc);
std::vector<SafetyGoalDef> parse_goals(const nlohmann::json& doc);
SecTable parse_sec_table(const nlohmann::json& doc);
nlohmann::json sec_table_to_json(const SecTable& table);

struct Catalog {
  std::vector<FunctionalRequirement> requirements;
  std::vector<CurationRule> rules;
  std::vector<SafetyGoalDef> goals;
  SecTable sec_table;
};

/// Loads requirements.json, rules.json, goals.json and sec_table.json from `dir`.
Catalog load_catalog(const std::string& dir);

struct Assessment {
  std::vector<HazardousEvent> hazards;
  std::vector<SafetyGoal> goals;
};
Assessment assess(const Catalog& catalog);

}  // namespace ixda::hara
