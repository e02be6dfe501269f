#include <catch2/catch_amalgamated.hpp>

#include "wrapup/schema.hpp"
#include "wrapup/synth.hpp"

using namespace wrapup;

namespace {

std::string minimal_schema_text() {
  return R"({
    "object_types": [
      {"name": "widget", "slots": [{"name": "widget-name", "kind": "open"}]}
    ],
    "link_types": []
  })";
}

}  // namespace

TEST_CASE("minimal schema loads") {
  DomainSchema s = load_schema(minimal_schema_text());
  REQUIRE(s.object_types.size() == 1);
  REQUIRE(s.link_types.empty());
  REQUIRE(s.object_type("widget") != nullptr);
  REQUIRE(s.object_type("widget")->slot("widget-name")->kind == SlotKind::Open);
}

TEST_CASE("microelectronics schema shape") {
  DomainSchema s = microelectronics_schema();
  REQUIRE(s.object_types.size() == 6);
  REQUIRE(s.link_types.size() >= 6);
  REQUIRE(s.object_type("entity") != nullptr);
  REQUIRE(s.object_type("lithography") != nullptr);
  REQUIRE(s.object_type("packaging") != nullptr);
  REQUIRE(s.object_type("equipment") != nullptr);
  REQUIRE(s.object_type("device") != nullptr);
  REQUIRE(s.object_type("microelectronics-capability") != nullptr);
  for (const char* role : {"developer", "manufacturer", "distributor", "purchaser-user"}) {
    const LinkTypeDef* l = s.link_type(role);
    REQUIRE(l != nullptr);
    REQUIRE(l->creates_relation == "microelectronics-capability");
  }
}

TEST_CASE("schema round-trips through json") {
  DomainSchema s = microelectronics_schema();
  DomainSchema again = load_schema(schema_to_json(s).dump());
  REQUIRE(schema_to_json(again).dump() == schema_to_json(s).dump());
  REQUIRE(again.fingerprint() == s.fingerprint());
}

TEST_CASE("cyclic link graph rejected") {
  std::string text = R"({
    "object_types": [
      {"name": "a", "slots": []},
      {"name": "b", "slots": []}
    ],
    "link_types": [
      {"name": "ab", "from": "a", "to": "b"},
      {"name": "ba", "from": "b", "to": "a"}
    ]
  })";
  REQUIRE_THROWS_AS(load_schema(text), ValidationError);
}

TEST_CASE("closed slot needs at least two values") {
  std::string text = R"({
    "object_types": [
      {"name": "a", "slots": [{"name": "kind", "kind": "closed", "values": ["only"]}]}
    ],
    "link_types": []
  })";
  REQUIRE_THROWS_WITH(load_schema(text), Catch::Matchers::ContainsSubstring("kind"));
}

TEST_CASE("duplicate names rejected") {
  std::string text = R"({
    "object_types": [{"name": "a", "slots": []}, {"name": "a", "slots": []}],
    "link_types": []
  })";
  REQUIRE_THROWS_WITH(load_schema(text), Catch::Matchers::ContainsSubstring("a"));
}

TEST_CASE("unknown link endpoint rejected") {
  std::string text = R"({
    "object_types": [{"name": "a", "slots": []}],
    "link_types": [{"name": "ab", "from": "a", "to": "missing"}]
  })";
  REQUIRE_THROWS_WITH(load_schema(text), Catch::Matchers::ContainsSubstring("missing"));
}

TEST_CASE("link_levels orders process-equipment before capability-process") {
  std::string text = R"({
    "object_types": [
      {"name": "process", "slots": []},
      {"name": "equipment", "slots": []},
      {"name": "capability", "slots": []}
    ],
    "link_types": [
      {"name": "capability-process", "from": "capability", "to": "process"},
      {"name": "process-equipment", "from": "process", "to": "equipment"}
    ]
  })";
  DomainSchema s = load_schema(text);
  auto levels = link_levels(s);
  REQUIRE(levels.size() == 2);
  CHECK(levels[0].name == "process-equipment");
  CHECK(levels[1].name == "capability-process");
}

TEST_CASE("link_levels with no links is empty") {
  DomainSchema s = load_schema(minimal_schema_text());
  REQUIRE(link_levels(s).empty());
}

TEST_CASE("link_levels breaks ties by name") {
  std::string text = R"({
    "object_types": [
      {"name": "x", "slots": []},
      {"name": "y", "slots": []},
      {"name": "z", "slots": []}
    ],
    "link_types": [
      {"name": "beta", "from": "x", "to": "z"},
      {"name": "alpha", "from": "x", "to": "y"}
    ]
  })";
  auto levels = link_levels(load_schema(text));
  REQUIRE(levels.size() == 2);
  CHECK(levels[0].name == "alpha");
  CHECK(levels[1].name == "beta");
}

namespace {

/// Brute-force strict reachability (at least one edge) over link edges.
bool reachable(const DomainSchema& s, const std::string& from, const std::string& to) {
  std::set<std::string> seen;
  for (const auto& l : s.link_types)
    if (l.from_type == from) seen.insert(l.to_type);
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& l : s.link_types) {
      if (seen.count(l.from_type) && !seen.count(l.to_type)) {
        seen.insert(l.to_type);
        grew = true;
      }
    }
  }
  return seen.count(to) > 0;
}

DomainSchema random_schema(std::mt19937_64& rng) {
  DomainSchema s;
  int n_types = 2 + static_cast<int>(rng() % 7);  // up to 8
  for (int i = 0; i < n_types; ++i)
    s.object_types.push_back({"type" + std::to_string(i), {}});
  int n_links = static_cast<int>(rng() % 9);
  for (int i = 0; i < n_links; ++i) {
    // edges only from lower to higher index keep the graph acyclic
    size_t a = rng() % static_cast<size_t>(n_types);
    size_t b = rng() % static_cast<size_t>(n_types);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    s.link_types.push_back({"link" + std::to_string(i), "type" + std::to_string(a),
                            "type" + std::to_string(b), ""});
  }
  s.validate();
  return s;
}

}  // namespace

TEST_CASE("link_levels is a permutation and lower levels come strictly first") {
  std::mt19937_64 rng(20240811);
  for (int trial = 0; trial < 200; ++trial) {
    DomainSchema s = random_schema(rng);
    auto levels = link_levels(s);
    REQUIRE(levels.size() == s.link_types.size());
    std::multiset<std::string> original, sorted;
    for (const auto& l : s.link_types) original.insert(l.name);
    for (const auto& l : levels) sorted.insert(l.name);
    REQUIRE(original == sorted);
    for (size_t i = 0; i < levels.size(); ++i)
      for (size_t j = i + 1; j < levels.size(); ++j)
        CHECK_FALSE(reachable(s, levels[i].to_type, levels[j].to_type));
  }
}

TEST_CASE("subject link resolution") {
  DomainSchema s = microelectronics_schema();
  const LinkTypeDef* developer = s.link_type("developer");
  const LinkTypeDef* subject = s.subject_link(*developer);
  REQUIRE(subject != nullptr);
  CHECK(subject->name == "company");
  CHECK(s.subject_link(*s.link_type("lithography-device")) == nullptr);
}

TEST_CASE("connecting links for relation-carried roles") {
  DomainSchema s = microelectronics_schema();
  auto connecting = s.connecting_links("microelectronics-capability", "packaging");
  REQUIRE(connecting.size() == 4);
  auto direct = s.connecting_links("lithography", "equipment");
  REQUIRE(direct.size() == 1);
  CHECK(direct[0]->name == "lithography-equipment");
}
