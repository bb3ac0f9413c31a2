#include <map>
#include <sstream>

#include "doctest.h"
#include "pathise/embedding.hpp"
#include "pathise/supervision.hpp"
#include "test_util.hpp"

using namespace pathise;
using testutil::path_of;

namespace {

// Class membership straight from the definitions, without the priority order.
bool is_truncated(const std::vector<RelationPath>& weak, const RelationPath& n) {
  for (const auto& w : weak) {
    if (n.length() < w.length() && std::equal(n.relations.begin(), n.relations.end(), w.relations.begin())) return true;
  }
  return false;
}
bool is_extended(const std::vector<RelationPath>& weak, const RelationPath& n) {
  for (const auto& w : weak) {
    if (w.length() < n.length() && std::equal(w.relations.begin(), w.relations.end(), n.relations.begin())) return true;
  }
  return false;
}
bool is_deviated(const std::vector<RelationPath>& weak, const RelationPath& n) {
  for (const auto& w : weak) {
    for (std::size_t k = 1; k < std::min(n.length(), w.length()); ++k) {
      if (std::equal(n.relations.begin(), n.relations.begin() + k, w.relations.begin()) && n[k] != w[k]) return true;
    }
  }
  return false;
}

RelationPath random_path(std::mt19937_64& rng, std::uint32_t vocab, std::size_t max_len) {
  RelationPath p;
  std::size_t len = 1 + rng() % max_len;
  for (std::size_t i = 0; i < len; ++i) p.relations.push_back(RelationId{static_cast<std::uint32_t>(rng() % vocab)});
  return p;
}

}  // namespace

TEST_CASE("quotas for one hundred weak paths") {
  NegativeSamplingConfig cfg;
  NegativeQuotas q = negative_quotas(cfg, 100);
  // 900 negatives split 1:4:3 tenths, remainder to other.
  CHECK(q.total == 900);
  CHECK(q.truncated == 900 * 1 / 10);
  CHECK(q.extended == 900 * 4 / 10);
  CHECK(q.deviated == 900 * 3 / 10);
  CHECK(q.other == 900 - 90 - 360 - 270);
  CHECK(negative_quotas(cfg, 1000).total == 0);
  CHECK(negative_quotas(cfg, 1500).other == 0);
}

TEST_CASE("quotas agree with integer arithmetic for every weak count") {
  NegativeSamplingConfig cfg;
  for (std::size_t w = 0; w <= 1000; ++w) {
    NegativeQuotas q = negative_quotas(cfg, w);
    std::size_t n = 1000 - w;
    CHECK(q.total == n);
    CHECK(q.truncated == n / 10);
    CHECK(q.extended == 4 * n / 10);
    CHECK(q.deviated == 3 * n / 10);
    CHECK(q.truncated + q.extended + q.deviated + q.other == n);
  }
}

TEST_CASE("proportions must sum to one") {
  NegativeSamplingConfig cfg;
  cfg.rho_other = 0.3;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.rho_other = 0.2;
  cfg.rho_truncated = -0.1;
  cfg.rho_extended = 0.6;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("negative classes on hand examples") {
  std::vector<RelationPath> weak{path_of({0, 1})};
  CHECK(classify_negative(weak, path_of({0})) == NegativeClass::kTruncated);
  CHECK(classify_negative(weak, path_of({0, 1, 2})) == NegativeClass::kExtended);
  CHECK(classify_negative(weak, path_of({0, 2})) == NegativeClass::kDeviated);
  CHECK(classify_negative(weak, path_of({2})) == NegativeClass::kOther);
  CHECK(classify_negative(weak, path_of({1, 0})) == NegativeClass::kOther);
  CHECK(std::string(to_string(NegativeClass::kDeviated)) == "deviated");
}

TEST_CASE("classification is a total, disjoint partition consistent with the definitions") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RelationPath> weak, neg;
    const std::size_t n_weak = 1 + rng() % 4;
    for (std::size_t i = 0; i < n_weak; ++i) weak.push_back(random_path(rng, 4, 3));
    for (std::size_t i = 0; i < 30; ++i) neg.push_back(random_path(rng, 4, 3));
    NegativePartition p = classify_negatives(weak, neg);
    REQUIRE(p.size() == neg.size());
    std::map<RelationPath, int> seen;
    for (auto* cls : {&p.truncated, &p.extended, &p.deviated, &p.other}) {
      for (const auto& n : *cls) ++seen[n];
    }
    std::map<RelationPath, int> expected;
    for (const auto& n : neg) ++expected[n];
    CHECK(seen == expected);
    for (const auto& n : p.truncated) CHECK(is_truncated(weak, n));
    for (const auto& n : p.extended) CHECK((is_extended(weak, n) && !is_truncated(weak, n)));
    for (const auto& n : p.deviated) CHECK((is_deviated(weak, n) && !is_extended(weak, n) && !is_truncated(weak, n)));
    for (const auto& n : p.other) CHECK((!is_deviated(weak, n) && !is_extended(weak, n) && !is_truncated(weak, n)));
  }
}

TEST_CASE("sampled negatives respect quotas and the shared budget") {
  std::mt19937_64 rng(99);
  HashingProvider emb(32);
  std::vector<Embedding> rel;
  for (int r = 0; r < 6; ++r) rel.push_back(emb.embed("relation " + std::to_string(r)));
  for (int trial = 0; trial < 60; ++trial) {
    NegativeSamplingConfig cfg;
    cfg.max_paths = 1 + rng() % 1000;
    cfg.seed = trial;
    std::vector<RelationPath> weak;
    std::size_t nweak = rng() % (cfg.max_paths + 1);
    for (std::size_t i = 0; i < nweak; ++i) weak.push_back(random_path(rng, 6, 3));
    NegativePartition part;
    const std::size_t n_neg = rng() % 1500;
    for (std::size_t i = 0; i < n_neg; ++i) {
      RelationPath p = random_path(rng, 6, 3);
      switch (rng() % 4) {
        case 0: part.truncated.push_back(p); break;
        case 1: part.extended.push_back(p); break;
        case 2: part.deviated.push_back(p); break;
        default: part.other.push_back(p); break;
      }
    }
    Embedding q = emb.embed("question " + std::to_string(trial));
    auto got = sample_negatives(cfg, "q" + std::to_string(trial), weak, part, q, rel);
    NegativeQuotas quota = negative_quotas(cfg, weak.size());
    CHECK(got.size() <= quota.total);
    CHECK(weak.size() + got.size() <= cfg.max_paths);
    CHECK(got == sample_negatives(cfg, "q" + std::to_string(trial), weak, part, q, rel));
  }
}

TEST_CASE("over-quota classes keep their most question-similar paths") {
  HashingProvider emb(64);
  std::vector<std::string> names{"film directed by", "born in city", "spouse of person", "genre of film"};
  std::vector<Embedding> rel;
  for (const auto& n : names) rel.push_back(emb.embed(n));
  Embedding q = emb.embed("which film was directed by");
  NegativeSamplingConfig cfg;
  cfg.max_paths = 11;  // one weak path leaves 10: quotas 1, 4, 3, 2
  std::vector<RelationPath> weak{path_of({0, 1})};
  NegativePartition part;
  part.truncated = {path_of({1}), path_of({0}), path_of({2})};
  auto got = sample_negatives(cfg, "q", weak, part, q, rel);
  REQUIRE(got.size() == 1);
  double best = -2.0;
  RelationPath best_path;
  for (const auto& p : part.truncated) {
    std::vector<Embedding> r;
    for (RelationId id : p.relations) r.push_back(rel[index(id)]);
    double s = question_path_similarity(q, r);
    if (s > best) best = s, best_path = p;
  }
  CHECK(got[0] == best_path);
}

TEST_CASE("other negatives prefer relations shared with weak paths") {
  HashingProvider emb(16);
  std::vector<Embedding> rel;
  for (int r = 0; r < 5; ++r) rel.push_back(emb.embed("r" + std::to_string(r) + " label"));
  NegativeSamplingConfig cfg;
  cfg.max_paths = 11;  // other quota 2
  std::vector<RelationPath> weak{path_of({0, 1})};
  NegativePartition part;
  part.other = {path_of({3}), path_of({4, 4}), path_of({2, 1}), path_of({3, 4}), path_of({1, 0})};
  auto got = sample_negatives(cfg, "q", weak, part, emb.embed("question"), rel);
  REQUIRE(got.size() == 2);
  CHECK(got[0] == path_of({1, 0}));  // shares two relations
  CHECK(got[1] == path_of({2, 1}));
}

TEST_CASE("bags group candidates by the answer they reach") {
  std::istringstream in("q\tr\ta\nq\ts\ta\nq\ts\tb\nq\tt\tx\na\tu\tb\n");
  TripleStore s = load_triples(in);
  QuestionSample sample{"1", "?", {s.entity("q")}, {s.entity("a"), s.entity("b"), s.entity("x")}};
  std::vector<RelationPath> cand{RelationPath{{s.relation("r")}}, RelationPath{{s.relation("s")}},
                                 RelationPath{{s.relation("r"), s.relation("u")}}};
  BagConstruction bags = build_bags(s, sample, cand);
  REQUIRE(bags.positive.size() == 2);
  CHECK(bags.positive[0].answer == s.entity("a"));
  CHECK(bags.positive[0].paths == std::vector<RelationPath>{cand[0], cand[1]});
  CHECK(bags.positive[1].answer == s.entity("b"));
  CHECK(bags.positive[1].paths == std::vector<RelationPath>{cand[1], cand[2]});
  CHECK(bags.negatives.empty());
  CHECK(bags.uncovered_answers == std::vector<EntityId>{s.entity("x")});

  sample.answers = {s.entity("x")};
  BagConstruction none = build_bags(s, sample, cand);
  CHECK(none.positive.empty());
  CHECK(none.negatives == cand);
}

TEST_CASE("pseudo supervision picks the top scores with deterministic ties") {
  std::vector<PathScore> scores{{path_of({2, 1}), 0.5}, {path_of({3}), 0.9}, {path_of({0, 1}), 0.9}, {path_of({1}), 0.9}};
  auto top1 = select_pseudo_supervision("q", scores, 1);
  CHECK(top1.paths == std::vector<RelationPath>{path_of({1})});  // shorter, then smaller ids
  auto top3 = select_pseudo_supervision("q", scores, 3);
  CHECK(top3.paths == std::vector<RelationPath>{path_of({1}), path_of({3}), path_of({0, 1})});
  CHECK(select_pseudo_supervision("q", scores, 10).paths.size() == 4);
  CHECK_THROWS_WITH_AS(select_pseudo_supervision("q7", {}, 1), doctest::Contains("q7"), Error);

  auto dist = target_distribution(top3);
  double total = 0.0;
  for (const auto& [p, w] : dist) total += w;
  CHECK(total == doctest::Approx(1.0));
  CHECK(dist[0].second == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("weak positives over budget keep the most question-similar paths") {
  HashingProvider emb(32);
  std::vector<Embedding> rel;
  for (int r = 0; r < 4; ++r) rel.push_back(emb.embed("relation number " + std::to_string(r)));
  Embedding q = emb.embed("relation number 2");
  NegativeSamplingConfig cfg;
  cfg.max_paths = 2;
  std::vector<RelationPath> weak{path_of({0}), path_of({2}), path_of({1, 3}), path_of({2, 2})};
  auto kept = cap_weak_positives(cfg, weak, q, rel);
  CHECK(kept == std::vector<RelationPath>{path_of({2}), path_of({2, 2})});
  cfg.max_paths = 4;
  CHECK(cap_weak_positives(cfg, weak, q, rel) == weak);
}
