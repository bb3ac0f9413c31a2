#include "pathise/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace pathise {

using ad::Var;

void EstimatorConfig::validate() const {
  if (input_dim == 0 || model_dim == 0) throw validation_error("estimator dimensions must be positive");
  if (layers == 0) throw validation_error("estimator needs at least one encoder layer");
  if (heads == 0 || model_dim % heads != 0) throw validation_error("estimator model_dim must be divisible by heads");
  if (ffn_factor == 0) throw validation_error("estimator ffn_factor must be positive");
  if (max_positions < 2) throw validation_error("estimator max_positions must be at least 2");
  if (!(learning_rate > 0.0)) throw validation_error("estimator learning_rate must be positive");
  if (weight_decay < 0.0) throw validation_error("estimator weight_decay must be nonnegative");
}

std::string EstimatorConfig::to_json() const {
  nlohmann::json j = {{"input_dim", input_dim},         {"model_dim", model_dim},   {"layers", layers},
                      {"heads", heads},                 {"ffn_factor", ffn_factor}, {"max_positions", max_positions},
                      {"learning_rate", learning_rate}, {"weight_decay", weight_decay},
                      {"epochs", epochs},               {"seed", seed}};
  return j.dump();
}

EstimatorConfig EstimatorConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  EstimatorConfig c;
  c.input_dim = j.at("input_dim");
  c.model_dim = j.at("model_dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.ffn_factor = j.at("ffn_factor");
  c.max_positions = j.at("max_positions");
  c.learning_rate = j.at("learning_rate");
  c.weight_decay = j.at("weight_decay");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  return c;
}

namespace {

ParamSet init_params(const EstimatorConfig& c) {
  c.validate();
  std::mt19937_64 rng(derive_seed(c.seed, "estimator-init"));
  const auto d = static_cast<Eigen::Index>(c.model_dim);
  const auto din = static_cast<Eigen::Index>(c.input_dim);
  const auto dff = static_cast<Eigen::Index>(c.model_dim * c.ffn_factor);
  ParamSet p;
  p.add("input_projection", init_uniform(d, din, static_cast<double>(din), rng));
  p.add("positional", init_uniform(static_cast<Eigen::Index>(c.max_positions), d, static_cast<double>(d), rng));
  for (std::size_t l = 0; l < c.layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    p.add(pre + "ln1.gain", Matrix::Ones(1, d));
    p.add(pre + "ln1.bias", Matrix::Zero(1, d));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      p.add(pre + w, init_uniform(d, d, static_cast<double>(d), rng));
    }
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) p.add(pre + b, Matrix::Zero(1, d));
    p.add(pre + "ln2.gain", Matrix::Ones(1, d));
    p.add(pre + "ln2.bias", Matrix::Zero(1, d));
    p.add(pre + "ffn.w1", init_uniform(dff, d, static_cast<double>(d), rng));
    p.add(pre + "ffn.b1", Matrix::Zero(1, dff));
    p.add(pre + "ffn.w2", init_uniform(d, dff, static_cast<double>(dff), rng));
    p.add(pre + "ffn.b2", Matrix::Zero(1, d));
  }
  p.add("attention.w", init_uniform(1, d, static_cast<double>(d), rng));
  p.add("attention.V", init_uniform(d, d, static_cast<double>(d), rng));
  p.add("classifier.w1", init_uniform(d, 2 * d, static_cast<double>(2 * d), rng));
  p.add("classifier.b1", Matrix::Zero(1, d));
  p.add("classifier.w2", init_uniform(1, d, static_cast<double>(d), rng));
  p.add("classifier.b2", Matrix::Zero(1, 1));
  return p;
}

Matrix token_matrix(const Embedding& question, std::span<const Embedding> relations, std::size_t input_dim) {
  Matrix tokens(static_cast<Eigen::Index>(relations.size() + 1), static_cast<Eigen::Index>(input_dim));
  if (static_cast<std::size_t>(question.size()) != input_dim) {
    throw validation_error("question embedding has dimension " + std::to_string(question.size()) + ", estimator expects " +
                           std::to_string(input_dim));
  }
  tokens.row(0) = question.transpose();
  for (std::size_t i = 0; i < relations.size(); ++i) {
    if (static_cast<std::size_t>(relations[i].size()) != input_dim) {
      throw validation_error("relation embedding dimension mismatch");
    }
    tokens.row(static_cast<Eigen::Index>(i + 1)) = relations[i].transpose();
  }
  return tokens;
}

Matrix path_tokens(const Embedding& question, const RelationPath& path, std::span<const Embedding> relation_embeddings,
                   std::size_t input_dim) {
  std::vector<Embedding> rels;
  rels.reserve(path.length());
  for (RelationId r : path.relations) {
    if (index(r) >= relation_embeddings.size()) throw validation_error("relation id without an embedding");
    rels.push_back(relation_embeddings[index(r)]);
  }
  return token_matrix(question, rels, input_dim);
}

Matrix as_row(const Eigen::VectorXd& v) { return v.transpose(); }

}  // namespace

namespace detail {

EstimatorGraph bind(ad::Tape& tape, const ParamSet& params, const EstimatorConfig& config,
                    std::vector<Matrix>* grads) {
  std::size_t next = 0;
  auto take = [&]() {
    std::size_t i = next++;
    return grads ? tape.parameter(params.value(i), &(*grads)[i]) : tape.constant(params.value(i));
  };
  EstimatorGraph g;
  g.tape = &tape;
  g.heads = config.heads;
  g.projection = take();
  g.positional = take();
  for (std::size_t l = 0; l < config.layers; ++l) {
    EstimatorGraph::Layer L;
    L.ln1_gain = take();
    L.ln1_bias = take();
    L.wq = take();
    L.wk = take();
    L.wv = take();
    L.wo = take();
    L.bq = take();
    L.bk = take();
    L.bv = take();
    L.bo = take();
    L.ln2_gain = take();
    L.ln2_bias = take();
    L.w1 = take();
    L.b1 = take();
    L.w2 = take();
    L.b2 = take();
    g.layers.push_back(L);
  }
  g.att_w = take();
  g.att_v = take();
  g.cls_w1 = take();
  g.cls_b1 = take();
  g.cls_w2 = take();
  g.cls_b2 = take();
  if (next != params.size()) throw format_error("estimator parameter set does not match the configuration");
  return g;
}

Var encode(EstimatorGraph& g, const Matrix& tokens) {
  ad::Tape& t = *g.tape;
  const Eigen::Index n = tokens.rows();
  if (n > g.positional.rows()) throw validation_error("path longer than the estimator's max_positions allows");
  if (tokens.cols() != g.projection.cols()) throw validation_error("token dimension does not match input_projection");
  Var x = add(linear(t.constant(tokens), g.projection), rows(g.positional, 0, n));

  const Eigen::Index d = x.cols();
  const Eigen::Index dh = d / static_cast<Eigen::Index>(g.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (auto& L : g.layers) {
    Var h = layer_norm(x, L.ln1_gain, L.ln1_bias);
    Var q = linear(h, L.wq, L.bq);
    Var k = linear(h, L.wk, L.bk);
    Var v = linear(h, L.wv, L.bv);
    std::vector<Var> heads;
    heads.reserve(g.heads);
    for (Eigen::Index hd = 0; hd < static_cast<Eigen::Index>(g.heads); ++hd) {
      Var qh = cols(q, hd * dh, dh), kh = cols(k, hd * dh, dh), vh = cols(v, hd * dh, dh);
      Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
      heads.push_back(matmul(attn, vh));
    }
    x = add(x, linear(concat_cols(heads), L.wo, L.bo));
    Var f = layer_norm(x, L.ln2_gain, L.ln2_bias);
    x = add(x, linear(gelu(linear(f, L.w1, L.b1)), L.w2, L.b2));
  }
  return row(x, 0);
}

Var informativeness(EstimatorGraph& g, Var encoded) { return linear(tanh(linear(encoded, g.att_v)), g.att_w); }

Var classify(EstimatorGraph& g, Var bag, Var projected_question) {
  Var hidden = tanh(linear(concat_cols(bag, projected_question), g.cls_w1, g.cls_b1));
  return sigmoid(linear(hidden, g.cls_w2, g.cls_b2));
}

}  // namespace detail

MilEstimator::MilEstimator(EstimatorConfig config) : config_(config), params_(init_params(config)) {}

MilEstimator::MilEstimator(EstimatorConfig config, ParamSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  ad::Tape tape;
  detail::bind(tape, params_, config_, nullptr);  // shape/count check
}

Eigen::VectorXd MilEstimator::encode_path(const Embedding& question, std::span<const Embedding> relations) const {
  if (relations.empty()) throw validation_error("cannot encode an empty path");
  if (relations.size() + 1 > config_.max_positions) throw validation_error("path longer than max_positions - 1");
  ad::Tape tape;
  auto g = detail::bind(tape, params_, config_, nullptr);
  return detail::encode(g, token_matrix(question, relations, config_.input_dim)).value().row(0).transpose();
}

double MilEstimator::path_informativeness(const Eigen::VectorXd& encoded) const {
  const Matrix& w = params_.value(params_.find("attention.w"));
  const Matrix& V = params_.value(params_.find("attention.V"));
  if (encoded.size() != V.cols()) throw validation_error("encoded path has the wrong dimension");
  return (w * (V * encoded).array().tanh().matrix())(0, 0);
}

BagAggregate MilEstimator::aggregate_positive_bag(std::span<const Eigen::VectorXd> members) const {
  if (members.empty()) throw validation_error("positive bag must have at least one member");
  BagAggregate out;
  for (const auto& m : members) out.scores.push_back(path_informativeness(m));
  double mx = *std::max_element(out.scores.begin(), out.scores.end());
  double z = 0.0;
  for (double s : out.scores) z += std::exp(s - mx);
  out.bag = Eigen::VectorXd::Zero(members[0].size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    out.weights.push_back(std::exp(out.scores[i] - mx) / z);
    out.bag += out.weights.back() * members[i];
  }
  return out;
}

double MilEstimator::classify_bag(const Eigen::VectorXd& bag, const Eigen::VectorXd& projected_question) const {
  ad::Tape tape;
  auto g = detail::bind(tape, params_, config_, nullptr);
  return detail::classify(g, tape.constant(as_row(bag)), tape.constant(as_row(projected_question))).scalar();
}

Eigen::VectorXd MilEstimator::project(const Embedding& e) const {
  // Same product shape as the tape's linear(), so results agree bitwise.
  Matrix x = e.transpose();
  Matrix y = x * params_.value(params_.find("input_projection")).transpose();
  return y.row(0).transpose();
}

std::vector<double> MilEstimator::score_paths(const Embedding& question, std::span<const RelationPath> paths,
                                              std::span<const Embedding> relation_embeddings) const {
  std::vector<double> out;
  out.reserve(paths.size());
  ad::Tape tape;
  auto g = detail::bind(tape, params_, config_, nullptr);
  for (const RelationPath& p : paths) {
    if (p.empty() || p.length() + 1 > config_.max_positions) throw validation_error("path length out of range");
    Var h = detail::encode(g, path_tokens(question, p, relation_embeddings, config_.input_dim));
    out.push_back(detail::informativeness(g, h).scalar());
  }
  return out;
}

double MilEstimator::question_loss(const MilExample& ex, std::span<const Embedding> relation_embeddings,
                                   std::vector<Matrix>* grads) const {
  if (ex.positive_bags.empty() && ex.negatives.empty()) {
    throw validation_error("question " + ex.id + " contributes no bags");
  }
  ad::Tape tape;
  auto g = detail::bind(tape, params_, config_, grads);

  // Encode each referenced path once; bags may share members.
  std::vector<Var> encoded(ex.paths.size());
  auto encoded_path = [&](std::size_t i) -> Var {
    if (i >= ex.paths.size()) throw validation_error("bag member index out of range in question " + ex.id);
    if (!encoded[i].valid()) {
      const RelationPath& p = ex.paths[i];
      if (p.empty() || p.length() + 1 > config_.max_positions) {
        throw validation_error("path length out of range in question " + ex.id);
      }
      encoded[i] = detail::encode(g, path_tokens(ex.question, p, relation_embeddings, config_.input_dim));
    }
    return encoded[i];
  };

  Var qproj = linear(tape.constant(as_row(ex.question)), g.projection);
  Var one = tape.constant(Matrix::Ones(1, 1));
  Var loss = tape.constant(Matrix::Zero(1, 1));

  for (const auto& bag : ex.positive_bags) {
    if (bag.empty()) throw validation_error("empty positive bag in question " + ex.id);
    std::vector<Var> members, scores;
    for (std::size_t i : bag) {
      members.push_back(encoded_path(i));
      scores.push_back(detail::informativeness(g, members.back()));
    }
    Var alpha = softmax_rows(concat_cols(scores));
    Var h_bag = matmul(alpha, stack_rows(members));
    Var y = detail::classify(g, h_bag, qproj);
    loss = sub(loss, log_clamped(y, kProbabilityFloor));
  }
  for (std::size_t i : ex.negatives) {
    // Singleton negative bag: the bag representation is the path encoding itself.
    Var y = detail::classify(g, encoded_path(i), qproj);
    loss = sub(loss, log_clamped(sub(one, y), kProbabilityFloor));
  }
  if (grads) tape.backward(loss);
  return loss.scalar();
}

Checkpoint MilEstimator::to_checkpoint() const { return Checkpoint{kEstimatorKind, config_.to_json(), params_}; }

MilEstimator MilEstimator::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kEstimatorKind) throw format_error("checkpoint is not a " + std::string(kEstimatorKind));
  return MilEstimator(EstimatorConfig::from_json(ckpt.config_json), ckpt.params);
}

double mil_loss(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size() || probabilities.empty()) {
    throw validation_error("mil_loss needs one label per bag and at least one bag");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    double p = std::clamp(probabilities[i], kProbabilityFloor, 1.0 - kProbabilityFloor);
    if (labels[i] == 1) {
      loss -= std::log(p);
    } else if (labels[i] == 0) {
      loss -= std::log(1.0 - p);
    } else {
      throw validation_error("bag labels must be 0 or 1");
    }
  }
  return loss;
}

MilEstimator train_estimator(const EstimatorConfig& config, std::span<const MilExample> dataset,
                             std::span<const Embedding> relation_embeddings, std::vector<EpochLog>* history,
                             const EpochCallback& on_epoch) {
  if (dataset.empty()) throw validation_error("cannot train the estimator on an empty dataset");
  MilEstimator model(config);
  AdamW opt(model.params(), AdamWConfig{.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
  std::mt19937_64 rng(derive_seed(config.seed, "estimator-order"));
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double total = 0.0;
    for (std::size_t qi : order) {
      auto grads = model.params().zeros_like();
      double loss = model.question_loss(dataset[qi], relation_embeddings, &grads);
      if (!std::isfinite(loss)) {
        throw runtime_error("non-finite MIL loss at epoch " + std::to_string(epoch) + ", question " + dataset[qi].id);
      }
      opt.step(model.mutable_params(), grads);
      total += loss;
    }
    EpochLog log{epoch, total / static_cast<double>(dataset.size())};
    if (history) history->push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return model;
}

}  // namespace pathise
