#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pathise/types.hpp"

namespace pathise {

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Immutable knowledge graph: interned entities and relations plus a forward
/// adjacency index keyed by (head, relation).
///
/// Instances are produced by `TripleStore::Builder`, `load_triples` or
/// `load_snapshot` and never change afterwards, so a `const TripleStore&` can be
/// shared freely between threads.
class TripleStore {
 public:
  class Builder;

  std::size_t entity_count() const { return entity_labels_.size(); }
  std::size_t relation_count() const { return relation_labels_.size(); }
  std::size_t triple_count() const { return triples_.size(); }

  const std::string& entity_label(EntityId e) const;
  const std::string& relation_label(RelationId r) const;
  bool is_literal(EntityId e) const;

  std::optional<EntityId> find_entity(std::string_view label) const;
  std::optional<RelationId> find_relation(std::string_view label) const;
  // Throwing variants; the message names the missing label.
  EntityId entity(std::string_view label) const;
  RelationId relation(std::string_view label) const;

  /// Tails t with (e, r, t) in the store, sorted by id. Empty span when the
  /// entity has no such edge; throws when either id is unknown.
  std::span<const EntityId> neighbors(EntityId e, RelationId r) const;

  /// Relations r with at least one (e, r, *) edge, sorted by id.
  std::span<const RelationId> outgoing_relations(EntityId e) const;

  /// Triples in load order (first occurrence).
  std::span<const Triple> triples() const { return triples_; }

  bool contains(EntityId e) const { return index(e) < entity_labels_.size(); }
  bool contains(RelationId r) const { return index(r) < relation_labels_.size(); }

  std::string path_to_string(const RelationPath& path, std::string_view sep = " -> ") const;

 private:
  std::vector<std::string> entity_labels_;
  std::vector<bool> literal_flags_;
  std::vector<std::string> relation_labels_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::string, RelationId> relation_ids_;
  std::vector<Triple> triples_;

  // CSR-style adjacency. For entity e, out_rel_[rel_offset_[e] .. rel_offset_[e+1])
  // lists its outgoing relations; edge block k (parallel to out_rel_) spans
  // tails_[tail_offset_[k] .. tail_offset_[k+1]).
  std::vector<std::uint32_t> rel_offset_;
  std::vector<RelationId> out_rel_;
  std::vector<std::uint32_t> tail_offset_;
  std::vector<EntityId> tails_;

  void check(EntityId e) const;
  void check(RelationId r) const;
  void build_index();

  friend class Builder;
  friend TripleStore load_snapshot(std::istream& in);
};

class TripleStore::Builder {
 public:
  EntityId intern_entity(std::string_view label);
  RelationId intern_relation(std::string_view label);
  /// Returns false when the triple was already present.
  bool add(std::string_view head, std::string_view relation, std::string_view tail);
  bool add(EntityId head, RelationId relation, EntityId tail);

  TripleStore build() &&;

 private:
  TripleStore store_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> seen_;  // (head,rel) -> tails
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t unique_triples = 0;
  std::size_t duplicates = 0;
};

/// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped; a line
/// with any other field count is a format error naming the line number.
/// A field wrapped in double quotes is flagged as a literal.
TripleStore load_triples(std::istream& in, LoadReport* report = nullptr);
TripleStore load_triples(const std::filesystem::path& path, LoadReport* report = nullptr);

// Binary snapshot: magic "PISESTOR", u32 format version, then the tables.
inline constexpr std::uint32_t kStoreFormatVersion = 1;
void save_snapshot(const TripleStore& store, std::ostream& out);
TripleStore load_snapshot(std::istream& in);
TripleStore load_snapshot(const std::filesystem::path& path);

}  // namespace pathise
