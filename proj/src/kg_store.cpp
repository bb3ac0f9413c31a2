#include "pathise/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"

namespace pathise {

bool RelationPath::is_prefix_of(const RelationPath& other) const {
  return relations.size() <= other.relations.size() &&
         std::equal(relations.begin(), relations.end(), other.relations.begin());
}

const std::string& TripleStore::entity_label(EntityId e) const {
  check(e);
  return entity_labels_[index(e)];
}

const std::string& TripleStore::relation_label(RelationId r) const {
  check(r);
  return relation_labels_[index(r)];
}

bool TripleStore::is_literal(EntityId e) const {
  check(e);
  return literal_flags_[index(e)];
}

std::optional<EntityId> TripleStore::find_entity(std::string_view label) const {
  auto it = entity_ids_.find(std::string(label));
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> TripleStore::find_relation(std::string_view label) const {
  auto it = relation_ids_.find(std::string(label));
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

EntityId TripleStore::entity(std::string_view label) const {
  if (auto e = find_entity(label)) return *e;
  throw not_found_error("unknown entity: " + std::string(label));
}

RelationId TripleStore::relation(std::string_view label) const {
  if (auto r = find_relation(label)) return *r;
  throw not_found_error("unknown relation: " + std::string(label));
}

void TripleStore::check(EntityId e) const {
  if (!contains(e)) throw not_found_error("entity id " + std::to_string(index(e)) + " is not in the store");
}

void TripleStore::check(RelationId r) const {
  if (!contains(r)) throw not_found_error("relation id " + std::to_string(index(r)) + " is not in the store");
}

std::span<const EntityId> TripleStore::neighbors(EntityId e, RelationId r) const {
  check(e);
  check(r);
  auto first = out_rel_.begin() + rel_offset_[index(e)];
  auto last = out_rel_.begin() + rel_offset_[index(e) + 1];
  auto it = std::lower_bound(first, last, r);
  if (it == last || *it != r) return {};
  auto block = static_cast<std::size_t>(it - out_rel_.begin());
  return std::span<const EntityId>(tails_).subspan(tail_offset_[block], tail_offset_[block + 1] - tail_offset_[block]);
}

std::span<const RelationId> TripleStore::outgoing_relations(EntityId e) const {
  check(e);
  return std::span<const RelationId>(out_rel_).subspan(rel_offset_[index(e)],
                                                       rel_offset_[index(e) + 1] - rel_offset_[index(e)]);
}

std::string TripleStore::path_to_string(const RelationPath& path, std::string_view sep) const {
  std::string out;
  for (std::size_t i = 0; i < path.length(); ++i) {
    if (i) out += sep;
    out += relation_label(path[i]);
  }
  return out;
}

void TripleStore::build_index() {
  std::vector<Triple> sorted = triples_;
  std::sort(sorted.begin(), sorted.end());

  const std::size_t n = entity_labels_.size();
  rel_offset_.assign(n + 1, 0);
  out_rel_.clear();
  tail_offset_.clear();
  tails_.clear();
  tails_.reserve(sorted.size());

  std::size_t i = 0;
  for (std::uint32_t e = 0; e < n; ++e) {
    rel_offset_[e] = static_cast<std::uint32_t>(out_rel_.size());
    while (i < sorted.size() && index(sorted[i].head) == e) {
      RelationId r = sorted[i].relation;
      out_rel_.push_back(r);
      tail_offset_.push_back(static_cast<std::uint32_t>(tails_.size()));
      while (i < sorted.size() && index(sorted[i].head) == e && sorted[i].relation == r) {
        tails_.push_back(sorted[i].tail);
        ++i;
      }
    }
  }
  rel_offset_[n] = static_cast<std::uint32_t>(out_rel_.size());
  tail_offset_.push_back(static_cast<std::uint32_t>(tails_.size()));
}

// ---------------------------------------------------------------------------

EntityId TripleStore::Builder::intern_entity(std::string_view label) {
  auto [it, inserted] = store_.entity_ids_.try_emplace(std::string(label),
                                                        EntityId{static_cast<std::uint32_t>(store_.entity_labels_.size())});
  if (inserted) {
    store_.entity_labels_.emplace_back(label);
    store_.literal_flags_.push_back(label.size() >= 2 && label.front() == '"' && label.back() == '"');
  }
  return it->second;
}

RelationId TripleStore::Builder::intern_relation(std::string_view label) {
  auto [it, inserted] = store_.relation_ids_.try_emplace(
      std::string(label), RelationId{static_cast<std::uint32_t>(store_.relation_labels_.size())});
  if (inserted) store_.relation_labels_.emplace_back(label);
  return it->second;
}

bool TripleStore::Builder::add(std::string_view head, std::string_view relation, std::string_view tail) {
  EntityId h = intern_entity(head);
  RelationId r = intern_relation(relation);
  EntityId t = intern_entity(tail);
  return add(h, r, t);
}

bool TripleStore::Builder::add(EntityId head, RelationId relation, EntityId tail) {
  store_.check(head);
  store_.check(relation);
  store_.check(tail);
  std::uint64_t key = (static_cast<std::uint64_t>(index(head)) << 32) | index(relation);
  auto& tails = seen_[key];
  if (std::find(tails.begin(), tails.end(), index(tail)) != tails.end()) return false;
  tails.push_back(index(tail));
  store_.triples_.push_back({head, relation, tail});
  return true;
}

TripleStore TripleStore::Builder::build() && {
  store_.build_index();
  seen_.clear();
  return std::move(store_);
}

// ---------------------------------------------------------------------------

TripleStore load_triples(std::istream& in, LoadReport* report) {
  TripleStore::Builder builder;
  LoadReport rep;
  std::string line;
  while (std::getline(in, line)) {
    ++rep.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw format_error("malformed triple at line " + std::to_string(rep.lines) + ": expected 3 tab-separated fields");
    }
    std::string_view v(line);
    auto head = v.substr(0, t1), rel = v.substr(t1 + 1, t2 - t1 - 1), tail = v.substr(t2 + 1);
    if (head.empty() || rel.empty() || tail.empty()) {
      throw format_error("malformed triple at line " + std::to_string(rep.lines) + ": empty field");
    }
    if (builder.add(head, rel, tail)) {
      ++rep.unique_triples;
    } else {
      ++rep.duplicates;
    }
  }
  if (report) *report = rep;
  return std::move(builder).build();
}

TripleStore load_triples(const std::filesystem::path& path, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw not_found_error("cannot open triple file " + path.string());
  return load_triples(in, report);
}

namespace {
constexpr std::string_view kStoreMagic = "PISESTOR";
}

void save_snapshot(const TripleStore& store, std::ostream& out) {
  io::write_magic(out, kStoreMagic, kStoreFormatVersion);
  io::write_pod<std::uint64_t>(out, store.entity_count());
  for (std::uint32_t e = 0; e < store.entity_count(); ++e) {
    io::write_string(out, store.entity_label(EntityId{e}));
  }
  io::write_pod<std::uint64_t>(out, store.relation_count());
  for (std::uint32_t r = 0; r < store.relation_count(); ++r) {
    io::write_string(out, store.relation_label(RelationId{r}));
  }
  io::write_pod<std::uint64_t>(out, store.triple_count());
  for (const Triple& t : store.triples()) {
    io::write_pod(out, index(t.head));
    io::write_pod(out, index(t.relation));
    io::write_pod(out, index(t.tail));
  }
}

TripleStore load_snapshot(std::istream& in) {
  std::uint32_t version = io::read_magic(in, kStoreMagic, "store snapshot");
  if (version != kStoreFormatVersion) {
    throw format_error("store snapshot has format version " + std::to_string(version) + ", expected " +
                       std::to_string(kStoreFormatVersion));
  }
  TripleStore::Builder builder;
  auto n_ent = io::read_pod<std::uint64_t>(in, "entity count");
  for (std::uint64_t i = 0; i < n_ent; ++i) builder.intern_entity(io::read_string(in, "entity label"));
  auto n_rel = io::read_pod<std::uint64_t>(in, "relation count");
  for (std::uint64_t i = 0; i < n_rel; ++i) builder.intern_relation(io::read_string(in, "relation label"));
  auto n_tri = io::read_pod<std::uint64_t>(in, "triple count");
  for (std::uint64_t i = 0; i < n_tri; ++i) {
    auto h = io::read_pod<std::uint32_t>(in, "triple");
    auto r = io::read_pod<std::uint32_t>(in, "triple");
    auto t = io::read_pod<std::uint32_t>(in, "triple");
    if (h >= n_ent || t >= n_ent || r >= n_rel) throw format_error("store snapshot references an unknown id");
    builder.add(EntityId{h}, RelationId{r}, EntityId{t});
  }
  return std::move(builder).build();
}

TripleStore load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw not_found_error("cannot open store snapshot " + path.string());
  return load_snapshot(in);
}

}  // namespace pathise
