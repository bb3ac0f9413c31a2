#pragma once

#include <span>
#include <string>
#include <vector>

#include "pathise/embedding.hpp"
#include "pathise/kg_store.hpp"
#include "pathise/path_engine.hpp"

namespace pathise {

/// All candidates that reach `answer` from some question entity.
struct PositiveBag {
  EntityId answer;
  std::vector<RelationPath> paths;
};

struct BagConstruction {
  std::vector<PositiveBag> positive;       // one per answer reached by some candidate
  std::vector<RelationPath> negatives;     // Z_q^-: candidates reaching no answer
  std::vector<EntityId> uncovered_answers;  // answers no candidate reaches
};

BagConstruction build_bags(const TripleStore& store, const QuestionSample& sample,
                           std::span<const RelationPath> candidates);

enum class NegativeClass { kTruncated, kExtended, kDeviated, kOther };

const char* to_string(NegativeClass c);

/// Class of one negative against the weak positives, checked in the order
/// truncated, extended, deviated, other:
///  - truncated: a proper prefix of some weak path;
///  - extended: some proper prefix of it is a weak path;
///  - deviated: shares a nonempty prefix with a weak path, then differs;
///  - other: none of the above.
NegativeClass classify_negative(std::span<const RelationPath> weak_positive, const RelationPath& negative);

struct NegativePartition {
  std::vector<RelationPath> truncated, extended, deviated, other;
  std::size_t size() const { return truncated.size() + extended.size() + deviated.size() + other.size(); }
};

NegativePartition classify_negatives(std::span<const RelationPath> weak_positive,
                                     std::span<const RelationPath> negatives);

struct NegativeSamplingConfig {
  std::size_t max_paths = 1000;  // N_max, shared by weak positives and negatives
  double rho_truncated = 0.1;
  double rho_extended = 0.4;
  double rho_deviated = 0.3;
  double rho_other = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct NegativeQuotas {
  std::size_t total = 0;  // N_neg
  std::size_t truncated = 0, extended = 0, deviated = 0, other = 0;
};

/// N_neg = max(0, N_max - |weak|); per-class floors, remainder to `other`.
NegativeQuotas negative_quotas(const NegativeSamplingConfig& config, std::size_t weak_count);

/// At most `max_paths` weak positives: when over budget, the most
/// question-similar paths are kept (earlier paths win ties), in input order.
std::vector<RelationPath> cap_weak_positives(const NegativeSamplingConfig& config,
                                             std::span<const RelationPath> weak_positive, const Embedding& question,
                                             std::span<const Embedding> relation_embeddings);

/// Budgeted negative sample for one question. Classes over quota keep their
/// most question-similar paths; `other` first takes paths sharing relations
/// with the weak positives (most shared first), then fills the rest by seeded
/// random draws from (seed, question id). Unused quota is not redistributed.
std::vector<RelationPath> sample_negatives(const NegativeSamplingConfig& config, const std::string& question_id,
                                           std::span<const RelationPath> weak_positive,
                                           const NegativePartition& partition, const Embedding& question,
                                           std::span<const Embedding> relation_embeddings);

struct PathScore {
  RelationPath path;
  double score = 0.0;
};

/// Z*_q with parallel scores, best first.
struct PseudoSupervision {
  std::string question_id;
  std::vector<RelationPath> paths;
  std::vector<double> scores;
};

/// Top-T by score; ties go to the shorter path, then the lexicographically
/// smaller relation-id sequence. Throws when `scores` is empty.
PseudoSupervision select_pseudo_supervision(const std::string& question_id, std::span<const PathScore> scores,
                                            std::size_t top_t);

/// Uniform 1/|Z*_q| over the selected paths.
std::vector<std::pair<RelationPath, double>> target_distribution(const PseudoSupervision& supervision);

}  // namespace pathise
