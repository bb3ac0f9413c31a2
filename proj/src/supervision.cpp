#include "pathise/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "pathise/params.hpp"

namespace pathise {

BagConstruction build_bags(const TripleStore& store, const QuestionSample& sample,
                           std::span<const RelationPath> candidates) {
  std::vector<EntityId> answers = sample.answers;
  std::sort(answers.begin(), answers.end());
  answers.erase(std::unique(answers.begin(), answers.end()), answers.end());

  std::vector<std::vector<RelationPath>> members(answers.size());
  BagConstruction out;
  for (const RelationPath& z : candidates) {
    std::vector<EntityId> reached;
    for (EntityId e : sample.question_entities) {
      auto ends = reachable_entities(store, e, z);
      reached.insert(reached.end(), ends.begin(), ends.end());
    }
    std::sort(reached.begin(), reached.end());
    bool any = false;
    for (std::size_t a = 0; a < answers.size(); ++a) {
      if (std::binary_search(reached.begin(), reached.end(), answers[a])) {
        members[a].push_back(z);
        any = true;
      }
    }
    if (!any) out.negatives.push_back(z);
  }
  for (std::size_t a = 0; a < answers.size(); ++a) {
    if (members[a].empty()) {
      out.uncovered_answers.push_back(answers[a]);
    } else {
      out.positive.push_back({answers[a], std::move(members[a])});
    }
  }
  return out;
}

const char* to_string(NegativeClass c) {
  switch (c) {
    case NegativeClass::kTruncated: return "truncated";
    case NegativeClass::kExtended: return "extended";
    case NegativeClass::kDeviated: return "deviated";
    case NegativeClass::kOther: return "other";
  }
  return "other";
}

NegativeClass classify_negative(std::span<const RelationPath> weak, const RelationPath& n) {
  for (const RelationPath& w : weak) {
    if (n.length() < w.length() && n.is_prefix_of(w)) return NegativeClass::kTruncated;
  }
  for (const RelationPath& w : weak) {
    if (w.length() < n.length() && w.is_prefix_of(n)) return NegativeClass::kExtended;
  }
  for (const RelationPath& w : weak) {
    std::size_t common = 0;
    while (common < n.length() && common < w.length() && n[common] == w[common]) ++common;
    if (common >= 1 && common < n.length() && common < w.length()) return NegativeClass::kDeviated;
  }
  return NegativeClass::kOther;
}

NegativePartition classify_negatives(std::span<const RelationPath> weak, std::span<const RelationPath> negatives) {
  NegativePartition p;
  for (const RelationPath& n : negatives) {
    switch (classify_negative(weak, n)) {
      case NegativeClass::kTruncated: p.truncated.push_back(n); break;
      case NegativeClass::kExtended: p.extended.push_back(n); break;
      case NegativeClass::kDeviated: p.deviated.push_back(n); break;
      case NegativeClass::kOther: p.other.push_back(n); break;
    }
  }
  return p;
}

void NegativeSamplingConfig::validate() const {
  for (double r : {rho_truncated, rho_extended, rho_deviated, rho_other}) {
    if (!(r >= 0.0)) throw validation_error("negative sampling proportions must be nonnegative");
  }
  double total = rho_truncated + rho_extended + rho_deviated + rho_other;
  if (std::abs(total - 1.0) > 1e-9) {
    throw validation_error("negative sampling proportions must sum to 1 (got " + std::to_string(total) + ")");
  }
}

NegativeQuotas negative_quotas(const NegativeSamplingConfig& config, std::size_t weak_count) {
  config.validate();
  NegativeQuotas q;
  q.total = weak_count >= config.max_paths ? 0 : config.max_paths - weak_count;
  // The epsilon keeps products such as 0.29 * 100 from flooring one below the exact value.
  auto share = [&](double rho) {
    return static_cast<std::size_t>(std::floor(rho * static_cast<double>(q.total) + 1e-9));
  };
  q.truncated = share(config.rho_truncated);
  q.extended = share(config.rho_extended);
  q.deviated = share(config.rho_deviated);
  q.other = q.total - q.truncated - q.extended - q.deviated;
  return q;
}

namespace {

double similarity(const RelationPath& p, const Embedding& question, std::span<const Embedding> relation_embeddings) {
  std::vector<Embedding> rels;
  rels.reserve(p.length());
  for (RelationId r : p.relations) {
    if (index(r) >= relation_embeddings.size()) throw validation_error("relation id without an embedding");
    rels.push_back(relation_embeddings[index(r)]);
  }
  return question_path_similarity(question, rels);
}

// Highest similarity first; equal scores keep input order.
std::vector<RelationPath> top_by_similarity(const std::vector<RelationPath>& paths, std::size_t quota,
                                            const Embedding& question, std::span<const Embedding> rel_emb) {
  if (paths.size() <= quota) return paths;
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < paths.size(); ++i) ranked.emplace_back(similarity(paths[i], question, rel_emb), i);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<RelationPath> out;
  for (std::size_t i = 0; i < quota; ++i) out.push_back(paths[ranked[i].second]);
  return out;
}

}  // namespace

std::vector<RelationPath> sample_negatives(const NegativeSamplingConfig& config, const std::string& question_id,
                                           std::span<const RelationPath> weak, const NegativePartition& partition,
                                           const Embedding& question, std::span<const Embedding> rel_emb) {
  NegativeQuotas q = negative_quotas(config, weak.size());
  std::vector<RelationPath> out;
  for (auto [cls, quota] : {std::pair{&partition.truncated, q.truncated}, std::pair{&partition.extended, q.extended},
                            std::pair{&partition.deviated, q.deviated}}) {
    auto kept = top_by_similarity(*cls, quota, question, rel_emb);
    out.insert(out.end(), kept.begin(), kept.end());
  }

  const auto& other = partition.other;
  if (other.size() <= q.other) {
    out.insert(out.end(), other.begin(), other.end());
    return out;
  }

  std::set<RelationId> weak_relations;
  for (const RelationPath& w : weak) weak_relations.insert(w.relations.begin(), w.relations.end());

  struct Ranked {
    std::size_t overlap;
    double sim;
    std::size_t index;
  };
  std::vector<Ranked> overlapping;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < other.size(); ++i) {
    std::size_t overlap = 0;
    for (RelationId r : other[i].relations) overlap += weak_relations.count(r);
    if (overlap > 0) {
      overlapping.push_back({overlap, similarity(other[i], question, rel_emb), i});
    } else {
      rest.push_back(i);
    }
  }
  std::stable_sort(overlapping.begin(), overlapping.end(), [](const Ranked& a, const Ranked& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    return a.sim > b.sim;
  });
  std::size_t taken = 0;
  for (const Ranked& r : overlapping) {
    if (taken == q.other) break;
    out.push_back(other[r.index]);
    ++taken;
  }
  // Partial Fisher-Yates with a per-question stream.
  std::mt19937_64 rng(derive_seed(config.seed, "negatives/" + question_id));
  for (std::size_t i = 0; i < rest.size() && taken < q.other; ++i, ++taken) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (rest.size() - i));
    std::swap(rest[i], rest[j]);
    out.push_back(other[rest[i]]);
  }
  return out;
}

std::vector<RelationPath> cap_weak_positives(const NegativeSamplingConfig& config, std::span<const RelationPath> weak,
                                             const Embedding& question, std::span<const Embedding> rel_emb) {
  if (weak.size() <= config.max_paths) return {weak.begin(), weak.end()};
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < weak.size(); ++i) ranked.emplace_back(similarity(weak[i], question, rel_emb), i);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  ranked.resize(config.max_paths);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  std::vector<RelationPath> out;
  for (const auto& [score, i] : ranked) out.push_back(weak[i]);
  return out;
}

PseudoSupervision select_pseudo_supervision(const std::string& question_id, std::span<const PathScore> scores,
                                            std::size_t top_t) {
  if (scores.empty()) {
    throw validation_error("question " + question_id + " has no weakly supervised paths; it cannot be supervised");
  }
  if (top_t == 0) throw validation_error("top-T must be at least 1");
  std::vector<const PathScore*> ranked;
  for (const PathScore& s : scores) ranked.push_back(&s);
  std::sort(ranked.begin(), ranked.end(), [](const PathScore* a, const PathScore* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->path < b->path;
  });
  PseudoSupervision out{question_id, {}, {}};
  for (std::size_t i = 0; i < ranked.size() && i < top_t; ++i) {
    out.paths.push_back(ranked[i]->path);
    out.scores.push_back(ranked[i]->score);
  }
  return out;
}

std::vector<std::pair<RelationPath, double>> target_distribution(const PseudoSupervision& supervision) {
  if (supervision.paths.empty()) throw validation_error("empty pseudo supervision");
  const double p = 1.0 / static_cast<double>(supervision.paths.size());
  std::vector<std::pair<RelationPath, double>> out;
  for (const RelationPath& z : supervision.paths) out.emplace_back(z, p);
  return out;
}

}  // namespace pathise
