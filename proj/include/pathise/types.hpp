#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathise {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::uint32_t index(EntityId e) { return static_cast<std::uint32_t>(e); }
constexpr std::uint32_t index(RelationId r) { return static_cast<std::uint32_t>(r); }

// Errors raised by the core. `kind` decides the CLI / C API exit code.
class Error : public std::runtime_error {
 public:
  enum class Kind { kValidation, kNotFound, kFormat, kRuntime, kNetwork };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline Error validation_error(const std::string& msg) { return Error(Error::Kind::kValidation, msg); }
inline Error format_error(const std::string& msg) { return Error(Error::Kind::kFormat, msg); }
inline Error not_found_error(const std::string& msg) { return Error(Error::Kind::kNotFound, msg); }
inline Error runtime_error(const std::string& msg) { return Error(Error::Kind::kRuntime, msg); }

// An ordered relation sequence z = (r_1, ..., r_l). Ordering is length first,
// then lexicographic by relation id; every "deterministic tie-break" in the
// library uses this order.
struct RelationPath {
  std::vector<RelationId> relations;

  std::size_t length() const { return relations.size(); }
  bool empty() const { return relations.empty(); }
  RelationId operator[](std::size_t i) const { return relations[i]; }

  bool is_prefix_of(const RelationPath& other) const;

  friend bool operator==(const RelationPath&, const RelationPath&) = default;
  friend std::strong_ordering operator<=>(const RelationPath& a, const RelationPath& b) {
    if (auto c = a.relations.size() <=> b.relations.size(); c != 0) return c;
    return a.relations <=> b.relations;
  }
};

struct RelationPathHash {
  std::size_t operator()(const RelationPath& p) const noexcept {
    std::size_t h = 0xcbf29ce484222325ull;
    for (RelationId r : p.relations) {
      h ^= index(r) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

}  // namespace pathise
