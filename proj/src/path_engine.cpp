#include "pathise/path_engine.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace pathise {

namespace {

void sort_unique(std::vector<EntityId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

bool intersects(std::span<const EntityId> sorted_a, std::span<const EntityId> sorted_b) {
  auto a = sorted_a.begin(), b = sorted_b.begin();
  while (a != sorted_a.end() && b != sorted_b.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<EntityId> reachable_entities(const TripleStore& store, EntityId start, const RelationPath& path) {
  if (!store.contains(start)) throw not_found_error("entity id " + std::to_string(index(start)) + " is not in the store");
  std::vector<EntityId> frontier{start};
  std::vector<EntityId> next;
  for (RelationId r : path.relations) {
    next.clear();
    for (EntityId e : frontier) {
      auto tails = store.neighbors(e, r);
      next.insert(next.end(), tails.begin(), tails.end());
    }
    sort_unique(next);
    frontier.swap(next);
    if (frontier.empty()) break;
  }
  return frontier;
}

EnumerationResult enumerate_candidate_paths(const TripleStore& store, std::span<const EntityId> starts,
                                            const EnumerationOptions& options) {
  if (options.max_hop < 1) throw validation_error("max_hop must be at least 1");
  EnumerationResult result;
  std::set<RelationPath> found;

  // BFS over relation sequences. Each level maps a sequence to the frontier
  // reached from the start entities that realize it.
  std::map<RelationPath, std::vector<EntityId>> level;
  {
    std::vector<EntityId> roots(starts.begin(), starts.end());
    sort_unique(roots);
    for (EntityId s : roots) {
      for (RelationId r : store.outgoing_relations(s)) {
        auto tails = store.neighbors(s, r);
        auto& frontier = level[RelationPath{{r}}];
        frontier.insert(frontier.end(), tails.begin(), tails.end());
      }
    }
  }

  for (std::size_t hop = 1; hop <= options.max_hop && !level.empty(); ++hop) {
    std::map<RelationPath, std::vector<EntityId>> next;
    for (auto& [path, frontier] : level) {
      if (options.candidate_cap && found.size() >= options.candidate_cap) {
        result.capped = true;
        break;
      }
      found.insert(path);
      if (hop == options.max_hop) continue;
      sort_unique(frontier);
      for (EntityId e : frontier) {
        for (RelationId r : store.outgoing_relations(e)) {
          RelationPath ext = path;
          ext.relations.push_back(r);
          auto tails = store.neighbors(e, r);
          auto& f = next[ext];
          f.insert(f.end(), tails.begin(), tails.end());
        }
      }
    }
    if (result.capped) break;
    level.swap(next);
  }

  result.paths.assign(found.begin(), found.end());
  return result;
}

std::vector<RelationPath> weakly_supervised_paths(const TripleStore& store, const QuestionSample& sample,
                                                  std::span<const RelationPath> candidates) {
  std::vector<EntityId> answers = sample.answers;
  sort_unique(answers);
  std::vector<RelationPath> out;
  for (const RelationPath& z : candidates) {
    for (EntityId e : sample.question_entities) {
      if (intersects(reachable_entities(store, e, z), answers)) {
        out.push_back(z);
        break;
      }
    }
  }
  return out;
}

std::vector<GroundedEvidence> ground_paths(const TripleStore& store, std::span<const EntityId> question_entities,
                                           std::span<const RelationPath> paths) {
  std::vector<EntityId> starts(question_entities.begin(), question_entities.end());
  sort_unique(starts);
  std::vector<GroundedEvidence> out;
  for (const RelationPath& z : paths) {
    // Generated paths may name relations the store has never seen.
    bool known = !z.empty() && std::all_of(z.relations.begin(), z.relations.end(),
                                           [&](RelationId r) { return store.contains(r); });
    if (!known) continue;
    for (EntityId e : starts) {
      auto ends = reachable_entities(store, e, z);
      if (!ends.empty()) out.push_back({e, z, std::move(ends)});
    }
  }
  return out;
}

}  // namespace pathise
