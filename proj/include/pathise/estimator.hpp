#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pathise/autodiff.hpp"
#include "pathise/embedding.hpp"
#include "pathise/params.hpp"
#include "pathise/types.hpp"

namespace pathise {

/// Hyperparameters of the transformer MIL estimator. Encoder layers are
/// pre-LayerNorm with multi-head self-attention and a GELU feed-forward block;
/// there is no final LayerNorm, so the first-token output is the residual stream.
struct EstimatorConfig {
  std::size_t input_dim = 256;  // d_enc of the embedding provider
  std::size_t model_dim = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_factor = 4;
  std::size_t max_positions = 4;  // >= longest path + 1
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t epochs = 600;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static EstimatorConfig from_json(const std::string& json);
};

/// One question's MIL training instance. Bags index into `paths`.
struct MilExample {
  std::string id;
  Embedding question;
  std::vector<RelationPath> paths;
  std::vector<std::vector<std::size_t>> positive_bags;
  std::vector<std::size_t> negatives;  // each forms a singleton negative bag
};

struct BagAggregate {
  Eigen::VectorXd bag;
  std::vector<double> weights;  // softmax(scores)
  std::vector<double> scores;   // s_i
};

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr const char* kEstimatorKind = "mil-estimator";

class MilEstimator {
 public:
  /// Fresh parameters drawn from `config.seed`.
  explicit MilEstimator(EstimatorConfig config);
  MilEstimator(EstimatorConfig config, ParamSet params);

  const EstimatorConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& mutable_params() { return params_; }

  /// h_z: first-position encoder output over
  /// [P h_q + e_0, P h_r1 + e_1, ..., P h_rl + e_l].
  Eigen::VectorXd encode_path(const Embedding& question, std::span<const Embedding> relations) const;
  /// s = w^T tanh(V h_z).
  double path_informativeness(const Eigen::VectorXd& encoded) const;
  BagAggregate aggregate_positive_bag(std::span<const Eigen::VectorXd> members) const;
  /// sigmoid(MLP(bag || P h_q)).
  double classify_bag(const Eigen::VectorXd& bag, const Eigen::VectorXd& projected_question) const;
  Eigen::VectorXd project(const Embedding& e) const;

  /// Per-path informativeness s_i, in input order. Paths are scored
  /// independently of each other.
  std::vector<double> score_paths(const Embedding& question, std::span<const RelationPath> paths,
                                  std::span<const Embedding> relation_embeddings) const;

  /// L_MIL for one question. When `grads` is given, d(loss)/d(param) is added into it.
  double question_loss(const MilExample& example, std::span<const Embedding> relation_embeddings,
                       std::vector<Matrix>* grads = nullptr) const;

  Checkpoint to_checkpoint() const;
  static MilEstimator from_checkpoint(const Checkpoint& ckpt);

 private:
  EstimatorConfig config_;
  ParamSet params_;
};

/// BCE over labeled bag probabilities, probabilities clamped to [1e-12, 1 - 1e-12].
double mil_loss(std::span<const double> probabilities, std::span<const int> labels);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// AdamW, one optimizer step per question, question order reshuffled each
/// epoch from the config seed. Throws on an empty dataset and on a non-finite
/// loss (naming epoch and question id).
MilEstimator train_estimator(const EstimatorConfig& config, std::span<const MilExample> dataset,
                             std::span<const Embedding> relation_embeddings, std::vector<EpochLog>* history = nullptr,
                             const EpochCallback& on_epoch = {});

namespace detail {

// Estimator parameters bound to a tape; used by the forward pass and tests.
struct EstimatorGraph {
  struct Layer {
    ad::Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Var ln2_gain, ln2_bias, w1, b1, w2, b2;
  };
  ad::Tape* tape = nullptr;
  ad::Var projection, positional;
  std::vector<Layer> layers;
  ad::Var att_w, att_v;
  ad::Var cls_w1, cls_b1, cls_w2, cls_b2;
  std::size_t heads = 1;
};

EstimatorGraph bind(ad::Tape& tape, const ParamSet& params, const EstimatorConfig& config,
                    std::vector<Matrix>* grads);
ad::Var encode(EstimatorGraph& g, const Matrix& tokens);  // tokens: (l+1) x d_enc
ad::Var informativeness(EstimatorGraph& g, ad::Var encoded);
ad::Var classify(EstimatorGraph& g, ad::Var bag, ad::Var projected_question);

}  // namespace detail

}  // namespace pathise
