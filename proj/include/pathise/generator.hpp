#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pathise/embedding.hpp"
#include "pathise/params.hpp"
#include "pathise/types.hpp"

namespace pathise {

/// Autoregressive relation-path generator. Each step maps
/// [question embedding || mean of prefix relation vectors] through a tanh
/// hidden layer to logits over the relation vocabulary plus END (index V).
struct GeneratorConfig {
  std::vector<std::string> relation_labels;  // vocabulary, indexed by RelationId
  std::size_t input_dim = 256;
  std::size_t relation_dim = 32;
  std::size_t hidden = 64;
  std::size_t max_length = 2;  // decode horizon L
  std::size_t beam_size = 5;   // K
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  // Search guard for beam_search; reaching it ends the search early.
  std::size_t max_expansions = 200000;

  std::size_t vocab_size() const { return relation_labels.size(); }
  std::size_t end_token() const { return relation_labels.size(); }
  void validate() const;
  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& json);
};

struct ScoredPath {
  RelationPath path;
  double log_prob = 0.0;
};

/// One question's distillation target: the hard uniform distribution over `paths`.
struct DistillExample {
  std::string id;
  Embedding question;
  std::vector<RelationPath> paths;
};

inline constexpr const char* kGeneratorKind = "path-generator";

class PathGenerator {
 public:
  explicit PathGenerator(GeneratorConfig config);
  PathGenerator(GeneratorConfig config, ParamSet params);

  const GeneratorConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& mutable_params() { return params_; }

  /// log P(token | prefix, q) over relations then END; sums (in prob space) to 1.
  Eigen::VectorXd step_log_probs(const Embedding& question, std::span<const RelationId> prefix) const;

  /// sum_t log P(z_t | z_<t, q) + log P(END | z, q). Paths of length L still
  /// pay the END term (force-termination at the horizon).
  double path_log_likelihood(const Embedding& question, const RelationPath& path) const;

  /// -(1/|Z*|) sum_z log P(z | q), computed on a tape; adds gradients into
  /// `grads` when given.
  double distill_loss(const DistillExample& example, std::vector<Matrix>* grads = nullptr) const;

  /// Up to K distinct nonempty terminated paths with the highest total
  /// log-probability, best first; ties go to the lexicographically smaller id
  /// sequence. Best-first expansion in log-probability order, which is exact
  /// because extending a prefix never raises its probability.
  std::vector<ScoredPath> beam_search(const Embedding& question, std::size_t beam_size) const;
  std::vector<ScoredPath> beam_search(const Embedding& question) const {
    return beam_search(question, config_.beam_size);
  }

  Checkpoint to_checkpoint() const;
  static PathGenerator from_checkpoint(const Checkpoint& ckpt);

 private:
  void check_relation(RelationId r) const;
  GeneratorConfig config_;
  ParamSet params_;
};

struct DistillLog {
  std::size_t epoch = 0;
  double mean_nll = 0.0;
};

/// Per-question AdamW steps on the distillation loss. `on_epoch` also receives
/// the current model, so callers can take checkpoints.
PathGenerator distill(const GeneratorConfig& config, std::span<const DistillExample> dataset,
                      std::vector<DistillLog>* history = nullptr,
                      const std::function<void(const DistillLog&, const PathGenerator&)>& on_epoch = {});

}  // namespace pathise
