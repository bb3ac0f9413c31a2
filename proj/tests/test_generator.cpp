#include <cmath>
#include <sstream>

#include "doctest.h"
#include "pathise/embedding.hpp"
#include "pathise/generator.hpp"
#include "test_util.hpp"

using namespace pathise;
using testutil::path_of;

namespace {

GeneratorConfig small_config(std::size_t vocab, std::size_t max_length, std::uint64_t seed) {
  GeneratorConfig c;
  for (std::size_t i = 0; i < vocab; ++i) c.relation_labels.push_back("rel" + std::to_string(i));
  c.input_dim = 10;
  c.relation_dim = 6;
  c.hidden = 8;
  c.max_length = max_length;
  c.seed = seed;
  return c;
}

Embedding random_question(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  Embedding e(static_cast<Eigen::Index>(dim));
  for (auto& x : e) x = g(rng);
  return e / e.norm();
}

// Inflate the initial weights so the step distributions are far from uniform.
void scramble(PathGenerator& m, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  ParamSet& p = m.mutable_params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (Eigen::Index k = 0; k < p.value(i).size(); ++k) p.value(i).data()[k] = g(rng);
  }
}

void all_sequences(std::size_t vocab, std::size_t max_len, RelationPath& cur, std::vector<RelationPath>& out) {
  if (cur.length() == max_len) return;
  for (std::size_t r = 0; r < vocab; ++r) {
    cur.relations.push_back(RelationId{static_cast<std::uint32_t>(r)});
    out.push_back(cur);
    all_sequences(vocab, max_len, cur, out);
    cur.relations.pop_back();
  }
}

// Exhaustive K-best by scoring every sequence independently.
std::vector<ScoredPath> exhaustive_top_k(const PathGenerator& m, const Embedding& q, std::size_t k) {
  std::vector<RelationPath> seqs;
  RelationPath cur;
  all_sequences(m.config().vocab_size(), m.config().max_length, cur, seqs);
  std::vector<ScoredPath> scored;
  for (const auto& s : seqs) scored.push_back({s, m.path_log_likelihood(q, s)});
  std::sort(scored.begin(), scored.end(), [](const ScoredPath& a, const ScoredPath& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.path.relations < b.path.relations;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

}  // namespace

TEST_CASE("zero weights give the uniform step distribution") {
  GeneratorConfig cfg = small_config(4, 3, 1);
  PathGenerator m(cfg);
  for (std::size_t i = 0; i < m.params().size(); ++i) m.mutable_params().value(i).setZero();
  std::mt19937_64 rng(1);
  Embedding q = random_question(rng, cfg.input_dim);
  for (std::size_t len = 1; len <= 3; ++len) {
    RelationPath p;
    for (std::size_t i = 0; i < len; ++i) p.relations.push_back(RelationId{static_cast<std::uint32_t>(i % 4)});
    CHECK(m.path_log_likelihood(q, p) == doctest::Approx(static_cast<double>(len + 1) * std::log(1.0 / 5.0)));
  }
}

TEST_CASE("each step is a normalized distribution over relations and END") {
  std::mt19937_64 rng(2);
  GeneratorConfig cfg = small_config(5, 3, 2);
  PathGenerator m(cfg);
  scramble(m, rng, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    Embedding q = random_question(rng, cfg.input_dim);
    std::vector<RelationId> prefix;
    const std::size_t len = rng() % 3;
    for (std::size_t i = 0; i < len; ++i) prefix.push_back(RelationId{static_cast<std::uint32_t>(rng() % 5)});
    Eigen::VectorXd lp = m.step_log_probs(q, prefix);
    REQUIRE(lp.size() == 6);
    CHECK(std::abs(lp.array().exp().sum() - 1.0) < 1e-9);
  }
  std::vector<RelationId> bad{RelationId{5}};
  CHECK_THROWS_AS(m.step_log_probs(random_question(rng, cfg.input_dim), bad), Error);
}

TEST_CASE("terminated paths, immediate END and overflow past the horizon account for all mass") {
  std::mt19937_64 rng(3);
  for (std::size_t L = 1; L <= 3; ++L) {
    GeneratorConfig cfg = small_config(4, L, L);
    PathGenerator m(cfg);
    scramble(m, rng, 1.0);
    Embedding q = random_question(rng, cfg.input_dim);
    std::vector<RelationPath> seqs;
    RelationPath cur;
    all_sequences(4, L, cur, seqs);
    double mass = std::exp(m.step_log_probs(q, {})[4]);
    for (const auto& s : seqs) {
      double terminated = std::exp(m.path_log_likelihood(q, s));
      mass += terminated;
      if (s.length() == L) {
        double reach = terminated / std::exp(m.step_log_probs(q, s.relations)[4]);
        mass += reach - terminated;  // continuation beyond L that force-termination discards
      }
    }
    CHECK(std::abs(mass - 1.0) < 1e-6);
  }
}

TEST_CASE("beam search equals exhaustive K-best on small vocabularies") {
  std::mt19937_64 rng(4);
  for (std::size_t V = 1; V <= 6; ++V) {
    for (std::size_t L = 1; L <= 3; ++L) {
      GeneratorConfig cfg = small_config(V, L, V * 10 + L);
      PathGenerator m(cfg);
      scramble(m, rng, 2.0);
      Embedding q = random_question(rng, cfg.input_dim);
      for (std::size_t K : {1, 3, 5}) {
        auto got = m.beam_search(q, K);
        auto want = exhaustive_top_k(m, q, K);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK_MESSAGE(got[i].path == want[i].path, "V=" << V << " L=" << L << " K=" << K << " rank " << i);
          CHECK(got[i].log_prob == doctest::Approx(want[i].log_prob).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("beam search saturates when K exceeds the number of paths") {
  GeneratorConfig cfg = small_config(2, 1, 5);
  PathGenerator m(cfg);
  std::mt19937_64 rng(5);
  auto out = m.beam_search(random_question(rng, cfg.input_dim), 10);
  CHECK(out.size() == 2);
  CHECK(out[0].log_prob >= out[1].log_prob);
  CHECK_THROWS_AS(m.beam_search(random_question(rng, cfg.input_dim), 0), Error);
}

TEST_CASE("K of one is the single most likely path") {
  std::mt19937_64 rng(6);
  GeneratorConfig cfg = small_config(4, 2, 6);
  PathGenerator m(cfg);
  scramble(m, rng, 2.0);
  Embedding q = random_question(rng, cfg.input_dim);
  auto best = m.beam_search(q, 1);
  REQUIRE(best.size() == 1);
  std::vector<RelationPath> seqs;
  RelationPath cur;
  all_sequences(4, 2, cur, seqs);
  for (const auto& s : seqs) CHECK(m.path_log_likelihood(q, s) <= best[0].log_prob);
}

TEST_CASE("distillation loss is the cross-entropy to the uniform target") {
  std::mt19937_64 rng(7);
  GeneratorConfig cfg = small_config(5, 2, 7);
  PathGenerator m(cfg);
  scramble(m, rng, 1.0);
  DistillExample ex{"q", random_question(rng, cfg.input_dim), {path_of({0, 1}), path_of({3}), path_of({4, 4})}};
  // KL(target || model) = sum_z (1/n) (log(1/n) - log P(z)).
  double kl = 0.0;
  double n = static_cast<double>(ex.paths.size());
  for (const auto& z : ex.paths) kl += (1.0 / n) * (std::log(1.0 / n) - m.path_log_likelihood(ex.question, z));
  CHECK(std::abs(kl - (m.distill_loss(ex) - std::log(n))) < 1e-9);
  CHECK(kl >= 0.0);
}

TEST_CASE("distillation gradients pass finite differences") {
  std::mt19937_64 rng(8);
  GeneratorConfig cfg = small_config(4, 3, 8);
  PathGenerator m(cfg);
  scramble(m, rng, 0.7);
  DistillExample ex{"q", random_question(rng, cfg.input_dim), {path_of({0, 1, 2}), path_of({3}), path_of({1, 1})}};
  auto grads = m.params().zeros_like();
  m.distill_loss(ex, &grads);
  ParamSet p = m.params();
  double err = testutil::gradient_relative_error(p, grads, [&](const ParamSet& q) {
    return PathGenerator(cfg, q).distill_loss(ex);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("distillation memorizes single-path targets") {
  std::mt19937_64 rng(9);
  GeneratorConfig cfg = small_config(6, 2, 9);
  cfg.epochs = 400;
  cfg.learning_rate = 0.02;
  std::vector<DistillExample> data;
  for (std::uint32_t i = 0; i < 4; ++i) {
    data.push_back({"q" + std::to_string(i), random_question(rng, cfg.input_dim), {path_of({i, (i + 2) % 6})}});
  }
  std::vector<DistillLog> history;
  PathGenerator m = distill(cfg, data, &history);
  REQUIRE(history.size() == cfg.epochs);
  CHECK(history.back().mean_nll < 0.05);
  for (const auto& ex : data) CHECK(m.beam_search(ex.question, 1)[0].path == ex.paths[0]);

  PathGenerator again = distill(cfg, data);
  CHECK(again.params() == m.params());
}

TEST_CASE("zero epochs return the initialization") {
  GeneratorConfig cfg = small_config(3, 2, 10);
  cfg.epochs = 0;
  std::mt19937_64 rng(10);
  std::vector<DistillExample> data{{"q", random_question(rng, cfg.input_dim), {path_of({1})}}};
  CHECK(distill(cfg, data).params() == PathGenerator(cfg).params());
  CHECK_THROWS_AS(distill(cfg, std::span<const DistillExample>{}), Error);
}

TEST_CASE("generator checkpoints round trip") {
  GeneratorConfig cfg = small_config(3, 2, 11);
  PathGenerator m(cfg);
  std::stringstream buf;
  save_checkpoint(m.to_checkpoint(), buf);
  Checkpoint c = load_checkpoint(buf);
  PathGenerator back = PathGenerator::from_checkpoint(c);
  CHECK(back.params() == m.params());
  CHECK(back.config().to_json() == cfg.to_json());
  c.kind = "mil-estimator";
  CHECK_THROWS_AS(PathGenerator::from_checkpoint(c), Error);
}
