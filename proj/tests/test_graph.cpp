#include <sstream>

#include "doctest.h"
#include "pathise/kg_store.hpp"
#include "pathise/path_engine.hpp"
#include "test_util.hpp"

using namespace pathise;
using testutil::path_of;

namespace {

TripleStore sports() {
  std::istringstream in("LeBron James\tparent\tBronny James\nBronny James\tplay_for\tLos Angeles Lakers\n");
  return load_triples(in);
}

}  // namespace

TEST_CASE("triples load with first-occurrence interning") {
  std::istringstream in("a\tr\tb\n\nb\ts\t\"42\"\na\tr\tb\n");
  LoadReport rep;
  TripleStore s = load_triples(in, &rep);
  CHECK(rep.unique_triples == 2);
  CHECK(rep.duplicates == 1);
  CHECK(s.triple_count() == 2);
  CHECK(s.entity_count() == 3);
  CHECK(s.relation_count() == 2);
  CHECK(index(s.entity("a")) == 0);
  CHECK(index(s.entity("b")) == 1);
  CHECK(s.is_literal(s.entity("\"42\"")));
  CHECK_FALSE(s.is_literal(s.entity("a")));
}

TEST_CASE("malformed lines name the line number") {
  std::istringstream two_fields("a\tr\tb\nbad\tline\n");
  CHECK_THROWS_WITH_AS(load_triples(two_fields), doctest::Contains("line 2"), Error);
  std::istringstream empty_field("a\t\tb\n");
  CHECK_THROWS_AS(load_triples(empty_field), Error);
}

TEST_CASE("lookups of unknown labels and ids fail") {
  TripleStore s = sports();
  CHECK_FALSE(s.find_entity("Nobody").has_value());
  CHECK_THROWS_AS(s.entity("Nobody"), Error);
  CHECK_THROWS_AS(s.neighbors(EntityId{99}, RelationId{0}), Error);
  CHECK(s.neighbors(s.entity("Los Angeles Lakers"), s.relation("parent")).empty());
}

TEST_CASE("snapshot round trip preserves ids, labels and adjacency") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    TripleStore s = testutil::random_store(rng);
    std::stringstream buf;
    save_snapshot(s, buf);
    TripleStore t = load_snapshot(buf);
    REQUIRE(t.entity_count() == s.entity_count());
    REQUIRE(t.relation_count() == s.relation_count());
    REQUIRE(t.triple_count() == s.triple_count());
    for (std::size_t i = 0; i < s.triple_count(); ++i) CHECK(s.triples()[i] == t.triples()[i]);
    for (std::size_t e = 0; e < s.entity_count(); ++e) {
      EntityId id{static_cast<std::uint32_t>(e)};
      CHECK(s.entity_label(id) == t.entity_label(id));
      auto a = s.outgoing_relations(id), b = t.outgoing_relations(id);
      CHECK(std::vector<RelationId>(a.begin(), a.end()) == std::vector<RelationId>(b.begin(), b.end()));
    }
  }
}

TEST_CASE("snapshot with a wrong version is rejected") {
  std::stringstream buf;
  save_snapshot(sports(), buf);
  std::string bytes = buf.str();
  bytes[8] = 7;  // version follows the 8-byte magic
  std::istringstream in(bytes);
  CHECK_THROWS_WITH_AS(load_snapshot(in), doctest::Contains("version"), Error);
  std::istringstream junk("NOTASTORE");
  CHECK_THROWS_AS(load_snapshot(junk), Error);
}

TEST_CASE("neighbors are sorted and match a scan") {
  std::mt19937_64 rng(5);
  TripleStore s = testutil::random_store(rng);
  for (std::size_t e = 0; e < s.entity_count(); ++e) {
    for (std::size_t r = 0; r < s.relation_count(); ++r) {
      EntityId h{static_cast<std::uint32_t>(e)};
      RelationId rel{static_cast<std::uint32_t>(r)};
      auto n = s.neighbors(h, rel);
      CHECK(std::is_sorted(n.begin(), n.end()));
      CHECK(std::vector<EntityId>(n.begin(), n.end()) == testutil::brute_reachable(s, h, RelationPath{{rel}}));
    }
  }
}

TEST_CASE("two-hop example reaches the team") {
  TripleStore s = sports();
  RelationPath p{{s.relation("parent"), s.relation("play_for")}};
  auto ends = reachable_entities(s, s.entity("LeBron James"), p);
  REQUIRE(ends.size() == 1);
  CHECK(s.entity_label(ends[0]) == "Los Angeles Lakers");
  CHECK(reachable_entities(s, s.entity("LeBron James"), RelationPath{}) ==
        std::vector<EntityId>{s.entity("LeBron James")});
  CHECK(reachable_entities(s, s.entity("Bronny James"), p).empty());
}

TEST_CASE("candidate enumeration and weak supervision on the two-hop example") {
  TripleStore s = sports();
  std::vector<EntityId> starts{s.entity("LeBron James")};
  auto r = enumerate_candidate_paths(s, starts, {2, 0});
  RelationPath one{{s.relation("parent")}}, two{{s.relation("parent"), s.relation("play_for")}};
  CHECK(r.paths == std::vector<RelationPath>{one, two});
  CHECK_FALSE(r.capped);

  QuestionSample q{"s1", "Which team?", starts, {s.entity("Los Angeles Lakers")}};
  CHECK(weakly_supervised_paths(s, q, r.paths) == std::vector<RelationPath>{two});
  q.answers.clear();
  CHECK(weakly_supervised_paths(s, q, r.paths).empty());
}

TEST_CASE("candidate cap and invalid hop count") {
  std::mt19937_64 rng(3);
  TripleStore s = testutil::random_store(rng, 20, 6, 200);
  std::vector<EntityId> starts{EntityId{0}, EntityId{1}};
  auto full = enumerate_candidate_paths(s, starts, {3, 0});
  if (full.paths.size() > 2) {
    auto capped = enumerate_candidate_paths(s, starts, {3, 2});
    CHECK(capped.capped);
    CHECK(capped.paths.size() == 2);
  }
  CHECK_THROWS_AS(enumerate_candidate_paths(s, starts, {0, 0}), Error);
}

TEST_CASE("enumeration and weak supervision agree with brute force on random graphs") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    TripleStore s = testutil::random_store(rng, 20, 5, 80);
    std::vector<EntityId> starts{EntityId{static_cast<std::uint32_t>(rng() % s.entity_count())}};
    std::size_t hops = 1 + rng() % 3;
    auto got = enumerate_candidate_paths(s, starts, {hops, 0}).paths;
    auto want = testutil::brute_candidates(s, starts, hops);
    REQUIRE(got == want);
    QuestionSample q{"q", "?", starts, {}};
    for (int a = 0; a < 3; ++a) q.answers.push_back(EntityId{static_cast<std::uint32_t>(rng() % s.entity_count())});
    CHECK(weakly_supervised_paths(s, q, got) == testutil::brute_weak(s, q, want));
  }
}

TEST_CASE("grounding drops empty end sets and keeps path order") {
  TripleStore s = sports();
  RelationPath two{{s.relation("parent"), s.relation("play_for")}};
  RelationPath dead{{s.relation("play_for")}};
  std::vector<EntityId> starts{s.entity("LeBron James")};
  std::vector<RelationPath> paths{dead, two};
  auto ev = ground_paths(s, starts, paths);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].path == two);
  CHECK(ev[0].start == s.entity("LeBron James"));
  CHECK(ev[0].ends == std::vector<EntityId>{s.entity("Los Angeles Lakers")});
}

TEST_CASE("relation path ordering and prefixes") {
  CHECK(path_of({5}) < path_of({0, 0}));
  CHECK(path_of({0, 1}) < path_of({0, 2}));
  CHECK(path_of({0}).is_prefix_of(path_of({0, 3})));
  CHECK_FALSE(path_of({1}).is_prefix_of(path_of({0, 1})));
}
