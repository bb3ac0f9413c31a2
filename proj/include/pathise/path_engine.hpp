#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathise/kg_store.hpp"
#include "pathise/types.hpp"

namespace pathise {

struct QuestionSample {
  std::string id;
  std::string question;
  std::vector<EntityId> question_entities;  // E_q
  std::vector<EntityId> answers;            // A_q, may be empty at inference time
};

/// One grounded reasoning path (e, z, E_z(e)). `ends` is sorted by id and never empty.
struct GroundedEvidence {
  EntityId start;
  RelationPath path;
  std::vector<EntityId> ends;
};

/// E_z(e): entities at the end of some walk e -r1-> ... -rl-> e_l. Sorted by id.
std::vector<EntityId> reachable_entities(const TripleStore& store, EntityId start, const RelationPath& path);

struct EnumerationOptions {
  std::size_t max_hop = 2;
  // Upper bound on |Z_q|; 0 means unlimited. When hit, enumeration stops
  // expanding and `EnumerationResult::capped` is set.
  std::size_t candidate_cap = 0;
};

struct EnumerationResult {
  std::vector<RelationPath> paths;  // sorted (length, then relation ids)
  bool capped = false;
};

/// Z_q: every distinct relation sequence of length 1..L that can be walked from
/// at least one start entity. Walks may revisit entities.
EnumerationResult enumerate_candidate_paths(const TripleStore& store, std::span<const EntityId> starts,
                                            const EnumerationOptions& options);

/// Z~+_q: the candidates that reach at least one answer from some question entity.
std::vector<RelationPath> weakly_supervised_paths(const TripleStore& store, const QuestionSample& sample,
                                                  std::span<const RelationPath> candidates);

/// W_q^K: one evidence per (entity, path) pair with a nonempty end set. Output
/// follows path order, then entity id order within a path.
std::vector<GroundedEvidence> ground_paths(const TripleStore& store, std::span<const EntityId> question_entities,
                                           std::span<const RelationPath> paths);

}  // namespace pathise
