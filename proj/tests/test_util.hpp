#pragma once
// Shared fixtures and brute-force oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "pathise/kg_store.hpp"
#include "pathise/params.hpp"
#include "pathise/path_engine.hpp"

namespace testutil {

using namespace pathise;

inline TripleStore random_store(std::mt19937_64& rng, std::size_t max_entities = 50, std::size_t max_relations = 8,
                                std::size_t max_triples = 300) {
  std::size_t ne = 2 + rng() % (max_entities - 1);
  std::size_t nr = 1 + rng() % max_relations;
  std::size_t nt = 1 + rng() % max_triples;
  TripleStore::Builder b;
  for (std::size_t e = 0; e < ne; ++e) b.intern_entity("e" + std::to_string(e));
  for (std::size_t r = 0; r < nr; ++r) b.intern_relation("r" + std::to_string(r));
  for (std::size_t t = 0; t < nt; ++t) {
    b.add(EntityId{static_cast<std::uint32_t>(rng() % ne)}, RelationId{static_cast<std::uint32_t>(rng() % nr)},
          EntityId{static_cast<std::uint32_t>(rng() % ne)});
  }
  return std::move(b).build();
}

// Frontier expansion by scanning every triple at each step.
inline std::vector<EntityId> brute_reachable(const TripleStore& s, EntityId start, const RelationPath& path) {
  std::set<EntityId> frontier{start};
  for (RelationId r : path.relations) {
    std::set<EntityId> next;
    for (const Triple& t : s.triples()) {
      if (t.relation == r && frontier.count(t.head)) next.insert(t.tail);
    }
    frontier = std::move(next);
  }
  return {frontier.begin(), frontier.end()};
}

// Every relation sequence of length 1..max_hop (Cartesian product over the
// vocabulary) that reaches something from some start.
inline std::vector<RelationPath> brute_candidates(const TripleStore& s, const std::vector<EntityId>& starts,
                                                  std::size_t max_hop) {
  std::vector<RelationPath> out;
  std::vector<RelationPath> layer{RelationPath{}};
  for (std::size_t len = 1; len <= max_hop; ++len) {
    std::vector<RelationPath> next;
    for (const RelationPath& p : layer) {
      for (std::size_t r = 0; r < s.relation_count(); ++r) {
        RelationPath q = p;
        q.relations.push_back(RelationId{static_cast<std::uint32_t>(r)});
        next.push_back(q);
      }
    }
    for (const RelationPath& p : next) {
      bool any = std::any_of(starts.begin(), starts.end(),
                             [&](EntityId e) { return !brute_reachable(s, e, p).empty(); });
      if (any) out.push_back(p);
    }
    layer = std::move(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<RelationPath> brute_weak(const TripleStore& s, const QuestionSample& q,
                                            const std::vector<RelationPath>& candidates) {
  std::vector<RelationPath> out;
  for (const RelationPath& p : candidates) {
    bool hit = false;
    for (EntityId e : q.question_entities) {
      for (EntityId t : brute_reachable(s, e, p)) {
        hit |= std::find(q.answers.begin(), q.answers.end(), t) != q.answers.end();
      }
    }
    if (hit) out.push_back(p);
  }
  return out;
}

inline RelationPath path_of(std::initializer_list<std::uint32_t> ids) {
  RelationPath p;
  for (auto i : ids) p.relations.push_back(RelationId{i});
  return p;
}

// Norm-wise relative error between analytic and central-difference gradients
// of `loss` over every parameter scalar.
template <typename LossFn>
double gradient_relative_error(ParamSet& params, const std::vector<Matrix>& analytic, LossFn&& loss,
                               double h = 1e-5) {
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = params.value(i);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      double saved = w.data()[k];
      w.data()[k] = saved + h;
      double up = loss(params);
      w.data()[k] = saved - h;
      double down = loss(params);
      w.data()[k] = saved;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[i].data()[k];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  double denom = std::max(std::sqrt(a2), std::sqrt(n2));
  return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pathise_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
