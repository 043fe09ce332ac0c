#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>

#include "ixda/hara/hara.hpp"
#include "iso_table.hpp"
#include "support.hpp"

using namespace ixda;
using namespace ixda::hara;

namespace {

Catalog bundled() { return load_catalog(test::data_path("hara")); }

}  // namespace

TEST_CASE("determine_asil matches the ISO table on every nonzero cell") {
  int cells = 0;
  for (int s = 1; s <= 3; ++s) {
    for (int e = 1; e <= 4; ++e) {
      for (int c = 1; c <= 3; ++c) {
        CAPTURE(s);
        CAPTURE(e);
        CAPTURE(c);
        CHECK(std::string(to_string(determine_asil({s, e, c}))) == test::iso_asil(s, e, c));
        ++cells;
      }
    }
  }
  CHECK(cells == 36);
}

TEST_CASE("determine_asil corners") {
  CHECK(determine_asil({1, 1, 1}) == Asil::QM);
  CHECK(determine_asil({3, 4, 3}) == Asil::D);
  CHECK(determine_asil({3, 4, 2}) == Asil::C);
  for (int s = 0; s <= 3; ++s) {
    for (int e = 0; e <= 4; ++e) {
      for (int c = 0; c <= 3; ++c) {
        if (s == 0 || e == 0 || c == 0) {
          CHECK(determine_asil({s, e, c}) == Asil::QM);
        }
      }
    }
  }
  CHECK_THROWS_AS(validate(SecClass{4, 1, 1}), HaraError);
  CHECK_THROWS_AS(validate(SecClass{1, 5, 1}), HaraError);
  CHECK_THROWS_AS(validate(SecClass{1, 1, -1}), HaraError);
}

TEST_CASE("hazard derivation") {
  const Catalog cat = bundled();
  const auto hz = derive_hazards(cat.requirements, cat.rules);
  REQUIRE(hz.size() == 8);
  const std::array<const char*, 8> causes = {
      "Loss of vehicle AODCA",
      "Loss of vehicle braking",
      "Unintended acceleration",
      "Loss of V2I communication. No trajectory update",
      "Intermittent V2I communication. Delayed trajectory update",
      "Loss of IX sensing. Infrastructure blind to obstacles",
      "Faulty IX prediction. Incorrect trajectory update",
      "Emergency stop unavailable. No intervention on critical fault"};
  const std::array<GuideWord, 8> words = {GuideWord::LossOfFunction,   GuideWord::LossOfFunction,
                                          GuideWord::MoreThanIntended, GuideWord::LossOfFunction,
                                          GuideWord::Intermittent,     GuideWord::LossOfFunction,
                                          GuideWord::MoreThanIntended, GuideWord::LossOfFunction};
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(hz[i].id == "H" + std::to_string(i + 1));
    CHECK(hz[i].cause == causes[i]);
    CHECK(hz[i].event == "Collision with pedestrian");
    CHECK(hz[i].guide_word == words[i]);
  }

  CHECK(derive_hazards({}, cat.rules).empty());

  SUBCASE("a single braking requirement yields H2 alone") {
    std::vector<FunctionalRequirement> only;
    for (const auto& r : cat.requirements) {
      if (r.function == "vehicle braking") only.push_back(r);
    }
    REQUIRE(only.size() == 1);
    only[0].guide_words = {GuideWord::LossOfFunction};
    const auto one = derive_hazards(only, cat.rules);
    REQUIRE(one.size() == 1);
    CHECK(one[0].id == "H2");
    CHECK(one[0].cause == "Loss of vehicle braking");
  }
  SUBCASE("a rule outside the requirement's guide words is not applied") {
    auto reqs = cat.requirements;
    for (auto& r : reqs) {
      if (r.function == "vehicle braking") r.guide_words = {GuideWord::Intermittent};
    }
    for (const auto& h : derive_hazards(reqs, cat.rules)) {
      CHECK(h.id != "H2");
    }
  }
}

TEST_CASE("goal ratings reproduce the published table") {
  const Catalog cat = bundled();
  const auto a = assess(cat);
  REQUIRE(a.goals.size() == 6);
  struct Row {
    const char* id;
    const char* ns_c;
    const char* hs_c;
    const char* hs_uc;
    const char* worst;
    Allocation alloc;
  };
  const std::array<Row, 6> rows = {{{"SG1", "QM", "QM", "B", "B", Allocation::Vehicle},
                                    {"SG2", "QM", "QM", "B", "B", Allocation::Vehicle},
                                    {"SG3", "A", "A", "C", "C", Allocation::Vehicle},
                                    {"SG4", "QM", "QM", "A", "A", Allocation::Joint},
                                    {"SG5", "QM", "A", "C", "C", Allocation::IX},
                                    {"SG6", "QM", "A", "C", "C", Allocation::IX}}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& g = a.goals[i];
    CAPTURE(g.id);
    CHECK(g.id == rows[i].id);
    CHECK(std::string(to_string(g.per_scenario.at("NS/C"))) == rows[i].ns_c);
    CHECK(std::string(to_string(g.per_scenario.at("HS/C"))) == rows[i].hs_c);
    CHECK(std::string(to_string(g.per_scenario.at("HS/UC"))) == rows[i].hs_uc);
    CHECK(std::string(to_string(g.worst_case)) == rows[i].worst);
    CHECK(g.allocation == rows[i].alloc);
  }
}

TEST_CASE("assess_goal") {
  const Catalog cat = bundled();
  SUBCASE("all-S0 cells rate QM everywhere") {
    SecTable t;
    for (const char* cell : kCanonicalScenarios) t["SGX"][cell] = {0, 4, 3};
    const auto g = assess_goal({"SGX", "x", Allocation::IX}, t);
    for (const auto& [cell, asil] : g.per_scenario) CHECK(asil == Asil::QM);
    CHECK(g.worst_case == Asil::QM);
  }
  SUBCASE("a missing canonical cell is an error") {
    SecTable t = cat.sec_table;
    t["SG1"].erase("HS/C");
    CHECK_THROWS_AS(assess_goal(cat.goals.front(), t), HaraError);
  }
  SUBCASE("a custom table is recomputed") {
    Catalog c = cat;
    c.sec_table["SG3"]["HS/UC"] = {3, 4, 3};
    const auto a = assess(c);
    CHECK(a.goals[2].per_scenario.at("HS/UC") == Asil::D);
    CHECK(a.goals[2].worst_case == Asil::D);
  }
}

TEST_CASE("report rendering") {
  const Catalog cat = bundled();
  const auto a = assess(cat);
  const std::string md = render_report(a.hazards, a.goals, ReportFormat::Markdown);
  CHECK(md == test::read_file(std::string(IXDA_TEST_DIR) + "/golden/hara_report.md"));
  CHECK(render_report(a.hazards, a.goals, ReportFormat::Markdown) == md);

  const std::string csv = render_report(a.hazards, a.goals, ReportFormat::Csv);
  CHECK(csv ==
        "id,NS/C,HS/C,HS/UC,worst,allocation\n"
        "SG1,QM,QM,B,B,Vehicle\n"
        "SG2,QM,QM,B,B,Vehicle\n"
        "SG3,A,A,C,C,Vehicle\n"
        "SG4,QM,QM,A,A,Joint\n"
        "SG5,QM,A,C,C,IX\n"
        "SG6,QM,A,C,C,IX\n");

  const auto j = nlohmann::json::parse(render_report(a.hazards, a.goals, ReportFormat::Json));
  REQUIRE(j.at("goals").is_array());
  CHECK(j.at("goals").size() == 6);
  CHECK(j.at("goals")[2].at("asil").at("HS/UC") == "C");
  CHECK(j.at("hazards").size() == 8);
}

TEST_CASE("catalog parsing errors carry a pointer") {
  auto reqs = nlohmann::json::parse(test::read_file(test::data_path("hara/requirements.json")));
  CHECK_NOTHROW(parse_requirements(reqs));
  auto& first = reqs.is_array() ? reqs[0] : reqs.at("requirements")[0];
  first["guide_words"] = {"Sideways"};
  try {
    parse_requirements(reqs);
    FAIL("expected HaraError");
  } catch (const HaraError& e) {
    CHECK(std::string(e.what()).find("Sideways") != std::string::npos);
  }
  auto table = nlohmann::json::parse(test::read_file(test::data_path("hara/sec_table.json")));
  table["sec_table"]["SG1"]["NS/C"]["S"] = "S9";
  CHECK_THROWS_AS(parse_sec_table(table), HaraError);
  CHECK(parse_sec_table(sec_table_to_json(bundled().sec_table)) == bundled().sec_table);
}
