#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pathise/kg_store.hpp"

namespace pathise {

using Embedding = Eigen::VectorXd;

/// Source of frozen text embeddings for questions and relation labels.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual bool deterministic() const = 0;
  /// Throws on empty (all-whitespace) text.
  virtual Embedding embed(std::string_view text) const = 0;
  /// Provider spec string accepted by `make_provider`.
  virtual std::string spec() const = 0;
};

/// Signed feature hashing of character 3- and 4-grams, L2-normalized.
class HashingProvider final : public EmbeddingProvider {
 public:
  explicit HashingProvider(std::size_t dimension = 256);
  std::size_t dimension() const override { return dim_; }
  bool deterministic() const override { return true; }
  Embedding embed(std::string_view text) const override;
  std::string spec() const override { return "builtin:" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

/// Lookup table read from JSONL lines `{"text": ..., "vector": [...]}`.
class FileProvider final : public EmbeddingProvider {
 public:
  explicit FileProvider(const std::filesystem::path& path);
  std::size_t dimension() const override { return dim_; }
  bool deterministic() const override { return true; }
  Embedding embed(std::string_view text) const override;
  std::string spec() const override { return "file:" + path_.string(); }

 private:
  std::filesystem::path path_;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, Embedding> table_;
};

/// `builtin:<dim>` or `file:<path>`.
std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec);

double cosine_similarity(const Embedding& u, const Embedding& v);

/// Mean of cos(h_q, h_r) over the relations of a path.
double question_path_similarity(const Embedding& question, std::span<const Embedding> relations);

/// Embeddings of every relation label in the store, indexed by relation id.
std::vector<Embedding> embed_relations(const EmbeddingProvider& provider, const TripleStore& store);

}  // namespace pathise
