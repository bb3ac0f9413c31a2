#include "pathise/embedding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include "json.hpp"

namespace pathise {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// splitmix64 finalizer; spreads FNV output before taking bucket and sign bits.
std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

HashingProvider::HashingProvider(std::size_t dimension) : dim_(dimension) {
  if (dim_ == 0) throw validation_error("embedding dimension must be positive");
}

Embedding HashingProvider::embed(std::string_view text) const {
  text = trim(text);
  if (text.empty()) throw validation_error("cannot embed empty text");
  std::string s = " ";
  for (unsigned char c : text) s.push_back(static_cast<char>(std::tolower(c)));
  s.push_back(' ');

  Embedding v = Embedding::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t n = 3; n <= 4; ++n) {
    if (s.size() < n) continue;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      std::uint64_t h = mix(fnv1a(std::string_view(s).substr(i, n), 0xcbf29ce484222325ull ^ n));
      double sign = (h >> 63) ? -1.0 : 1.0;
      v[static_cast<Eigen::Index>(h % dim_)] += sign;
    }
  }
  double norm = v.norm();
  if (norm == 0.0) {
    // All n-grams cancelled out; fall back to a single whole-text feature.
    v[static_cast<Eigen::Index>(mix(fnv1a(s)) % dim_)] = 1.0;
    return v;
  }
  return v / norm;
}

FileProvider::FileProvider(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path);
  if (!in) throw not_found_error("cannot open embedding cache " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("text") || !j.contains("vector") || !j["vector"].is_array()) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": expected {\"text\", \"vector\"}");
    }
    const auto& arr = j["vector"];
    if (dim_ == 0) dim_ = arr.size();
    if (arr.size() != dim_ || dim_ == 0) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": inconsistent vector dimension");
    }
    Embedding v(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < dim_; ++i) {
      v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
      if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) {
        throw format_error(path.string() + ":" + std::to_string(lineno) + ": non-finite vector entry");
      }
    }
    table_[j["text"].get<std::string>()] = std::move(v);
  }
  if (table_.empty()) throw format_error("embedding cache " + path.string() + " is empty");
}

Embedding FileProvider::embed(std::string_view text) const {
  if (trim(text).empty()) throw validation_error("cannot embed empty text");
  auto it = table_.find(std::string(text));
  if (it == table_.end()) throw not_found_error("embedding cache has no entry for key: " + std::string(text));
  return it->second;
}

std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec) {
  if (spec.starts_with("builtin:")) {
    std::string dim(spec.substr(8));
    std::size_t pos = 0;
    unsigned long n = 0;
    try {
      n = std::stoul(dim, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != dim.size() || n == 0) throw validation_error("bad provider spec: " + std::string(spec));
    return std::make_unique<HashingProvider>(n);
  }
  if (spec == "builtin") return std::make_unique<HashingProvider>(256);
  if (spec.starts_with("file:")) return std::make_unique<FileProvider>(std::filesystem::path(spec.substr(5)));
  throw validation_error("unknown embedding provider spec: " + std::string(spec));
}

double cosine_similarity(const Embedding& u, const Embedding& v) {
  if (u.size() != v.size()) throw validation_error("embedding dimension mismatch");
  double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw validation_error("cosine similarity of a zero-norm vector");
  return u.dot(v) / (nu * nv);
}

double question_path_similarity(const Embedding& question, std::span<const Embedding> relations) {
  if (relations.empty()) throw validation_error("question_path_similarity needs a nonempty path");
  double sum = 0.0;
  for (const Embedding& r : relations) sum += cosine_similarity(question, r);
  return sum / static_cast<double>(relations.size());
}

std::vector<Embedding> embed_relations(const EmbeddingProvider& provider, const TripleStore& store) {
  std::vector<Embedding> out;
  out.reserve(store.relation_count());
  for (std::uint32_t r = 0; r < store.relation_count(); ++r) {
    out.push_back(provider.embed(store.relation_label(RelationId{r})));
  }
  return out;
}

}  // namespace pathise
