#include "pathise/generator.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "json.hpp"
#include "pathise/autodiff.hpp"

namespace pathise {

void GeneratorConfig::validate() const {
  if (relation_labels.empty()) throw validation_error("generator vocabulary is empty");
  if (input_dim == 0 || relation_dim == 0 || hidden == 0) throw validation_error("generator dimensions must be positive");
  if (max_length < 1) throw validation_error("generator max_length must be at least 1");
  if (beam_size < 1) throw validation_error("beam size K must be at least 1");
  if (!(learning_rate > 0.0)) throw validation_error("generator learning_rate must be positive");
}

std::string GeneratorConfig::to_json() const {
  nlohmann::json j = {{"relation_labels", relation_labels},
                      {"input_dim", input_dim},
                      {"relation_dim", relation_dim},
                      {"hidden", hidden},
                      {"max_length", max_length},
                      {"beam_size", beam_size},
                      {"learning_rate", learning_rate},
                      {"weight_decay", weight_decay},
                      {"epochs", epochs},
                      {"seed", seed},
                      {"max_expansions", max_expansions}};
  return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  GeneratorConfig c;
  c.relation_labels = j.at("relation_labels").get<std::vector<std::string>>();
  c.input_dim = j.at("input_dim");
  c.relation_dim = j.at("relation_dim");
  c.hidden = j.at("hidden");
  c.max_length = j.at("max_length");
  c.beam_size = j.at("beam_size");
  c.learning_rate = j.at("learning_rate");
  c.weight_decay = j.at("weight_decay");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  c.max_expansions = j.at("max_expansions");
  return c;
}

namespace {

enum ParamIndex : std::size_t { kRelEmb = 0, kW1, kB1, kW2, kB2, kParamCount };

ParamSet init_params(const GeneratorConfig& c) {
  c.validate();
  std::mt19937_64 rng(derive_seed(c.seed, "generator-init"));
  const auto v = static_cast<Eigen::Index>(c.vocab_size());
  const auto e = static_cast<Eigen::Index>(c.relation_dim);
  const auto h = static_cast<Eigen::Index>(c.hidden);
  const auto in = static_cast<Eigen::Index>(c.input_dim) + e;
  ParamSet p;
  p.add("relation_embeddings", init_uniform(v, e, 1.0, rng));
  p.add("step.w1", init_uniform(h, in, static_cast<double>(in), rng));
  p.add("step.b1", Matrix::Zero(1, h));
  p.add("step.w2", init_uniform(v + 1, h, static_cast<double>(h), rng));
  p.add("step.b2", Matrix::Zero(1, v + 1));
  return p;
}

}  // namespace

PathGenerator::PathGenerator(GeneratorConfig config) : config_(std::move(config)), params_(init_params(config_)) {}

PathGenerator::PathGenerator(GeneratorConfig config, ParamSet params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  ParamSet expected = init_params(config_);
  if (expected.size() != params_.size()) throw format_error("generator parameter set does not match the configuration");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected.name(i) != params_.name(i) || expected.value(i).rows() != params_.value(i).rows() ||
        expected.value(i).cols() != params_.value(i).cols()) {
      throw format_error("generator parameter " + expected.name(i) + " has the wrong name or shape");
    }
  }
}

void PathGenerator::check_relation(RelationId r) const {
  if (index(r) >= config_.vocab_size()) {
    throw validation_error("relation id " + std::to_string(index(r)) + " is outside the generator vocabulary");
  }
}

Eigen::VectorXd PathGenerator::step_log_probs(const Embedding& question, std::span<const RelationId> prefix) const {
  if (static_cast<std::size_t>(question.size()) != config_.input_dim) {
    throw validation_error("question embedding dimension does not match the generator");
  }
  const Matrix& table = params_.value(kRelEmb);
  Eigen::VectorXd x(static_cast<Eigen::Index>(config_.input_dim + config_.relation_dim));
  x.head(question.size()) = question;
  Eigen::VectorXd summary = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.relation_dim));
  for (RelationId r : prefix) {
    check_relation(r);
    summary += table.row(index(r)).transpose();
  }
  if (!prefix.empty()) summary /= static_cast<double>(prefix.size());
  x.tail(summary.size()) = summary;

  Eigen::VectorXd hidden = (params_.value(kW1) * x + params_.value(kB1).transpose()).array().tanh();
  Eigen::VectorXd logits = params_.value(kW2) * hidden + params_.value(kB2).transpose();
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

double PathGenerator::path_log_likelihood(const Embedding& question, const RelationPath& path) const {
  if (path.empty()) throw validation_error("path must have at least one relation");
  if (path.length() > config_.max_length) throw validation_error("path longer than the generator horizon");
  for (RelationId r : path.relations) check_relation(r);
  std::span<const RelationId> rels(path.relations);
  double total = 0.0;
  for (std::size_t t = 0; t < rels.size(); ++t) total += step_log_probs(question, rels.first(t))[index(rels[t])];
  total += step_log_probs(question, rels)[static_cast<Eigen::Index>(config_.end_token())];
  return total;
}

double PathGenerator::distill_loss(const DistillExample& ex, std::vector<Matrix>* grads) const {
  if (ex.paths.empty()) throw validation_error("question " + ex.id + " has empty supervision");
  if (static_cast<std::size_t>(ex.question.size()) != config_.input_dim) {
    throw validation_error("question embedding dimension does not match the generator");
  }
  ad::Tape tape;
  std::vector<ad::Var> p;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    p.push_back(grads ? tape.parameter(params_.value(i), &(*grads)[i]) : tape.constant(params_.value(i)));
  }
  const auto e = static_cast<Eigen::Index>(config_.relation_dim);
  ad::Var question_row = tape.constant(ex.question.transpose());
  ad::Var empty_summary = tape.constant(Matrix::Zero(1, e));
  ad::Var total = tape.constant(Matrix::Zero(1, 1));

  for (const RelationPath& z : ex.paths) {
    if (z.empty() || z.length() > config_.max_length) {
      throw validation_error("supervision path length out of range in question " + ex.id);
    }
    for (RelationId r : z.relations) check_relation(r);
    // One row per decoding step t = 0..l.
    std::vector<ad::Var> summaries{empty_summary};
    std::vector<int> ids;
    for (std::size_t t = 1; t <= z.length(); ++t) {
      ids.push_back(static_cast<int>(index(z[t - 1])));
      summaries.push_back(ad::mean_rows(ad::gather_rows(p[kRelEmb], ids)));
    }
    std::vector<ad::Var> qs(summaries.size(), question_row);
    ad::Var inputs = ad::concat_cols(ad::stack_rows(qs), ad::stack_rows(summaries));
    ad::Var logp = ad::log_softmax_rows(ad::linear(ad::tanh(ad::linear(inputs, p[kW1], p[kB1])), p[kW2], p[kB2]));
    for (std::size_t t = 0; t <= z.length(); ++t) {
      auto target = t < z.length() ? index(z[t]) : config_.end_token();
      total = ad::add(total, ad::element(logp, static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(target)));
    }
  }
  ad::Var loss = ad::scale(total, -1.0 / static_cast<double>(ex.paths.size()));
  if (grads) tape.backward(loss);
  return loss.scalar();
}

std::vector<ScoredPath> PathGenerator::beam_search(const Embedding& question, std::size_t beam_size) const {
  if (beam_size < 1) throw validation_error("beam size K must be at least 1");
  struct Hyp {
    double log_prob;
    bool done;
    std::vector<RelationId> seq;
  };
  // Highest log-prob first; at equal log-prob, open prefixes before finished
  // paths, then the lexicographically smaller sequence.
  auto worse = [](const Hyp& a, const Hyp& b) {
    if (a.log_prob != b.log_prob) return a.log_prob < b.log_prob;
    if (a.done != b.done) return a.done;
    return a.seq > b.seq;
  };
  std::priority_queue<Hyp, std::vector<Hyp>, decltype(worse)> frontier(worse);
  frontier.push({0.0, false, {}});
  const auto end = static_cast<Eigen::Index>(config_.end_token());

  std::vector<ScoredPath> out;
  std::size_t expansions = 0;
  while (!frontier.empty() && out.size() < beam_size) {
    Hyp h = frontier.top();
    frontier.pop();
    if (h.done) {
      out.push_back({RelationPath{h.seq}, h.log_prob});
      continue;
    }
    if (++expansions > config_.max_expansions) break;
    Eigen::VectorXd lp = step_log_probs(question, h.seq);
    if (!h.seq.empty()) frontier.push({h.log_prob + lp[end], true, h.seq});
    if (h.seq.size() < config_.max_length) {
      for (std::size_t r = 0; r < config_.vocab_size(); ++r) {
        std::vector<RelationId> seq = h.seq;
        seq.push_back(RelationId{static_cast<std::uint32_t>(r)});
        frontier.push({h.log_prob + lp[static_cast<Eigen::Index>(r)], false, std::move(seq)});
      }
    }
  }
  return out;
}

Checkpoint PathGenerator::to_checkpoint() const { return Checkpoint{kGeneratorKind, config_.to_json(), params_}; }

PathGenerator PathGenerator::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kGeneratorKind) throw format_error("checkpoint is not a " + std::string(kGeneratorKind));
  return PathGenerator(GeneratorConfig::from_json(ckpt.config_json), ckpt.params);
}

PathGenerator distill(const GeneratorConfig& config, std::span<const DistillExample> dataset,
                      std::vector<DistillLog>* history,
                      const std::function<void(const DistillLog&, const PathGenerator&)>& on_epoch) {
  if (dataset.empty()) throw validation_error("cannot distill the generator from an empty dataset");
  PathGenerator model(config);
  AdamW opt(model.params(), AdamWConfig{.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
  std::mt19937_64 rng(derive_seed(config.seed, "generator-order"));
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double total = 0.0;
    for (std::size_t qi : order) {
      auto grads = model.params().zeros_like();
      double loss = model.distill_loss(dataset[qi], &grads);
      if (!std::isfinite(loss)) {
        throw runtime_error("non-finite distillation loss at epoch " + std::to_string(epoch) + ", question " +
                            dataset[qi].id);
      }
      opt.step(model.mutable_params(), grads);
      total += loss;
    }
    DistillLog log{epoch, total / static_cast<double>(dataset.size())};
    if (history) history->push_back(log);
    if (on_epoch) on_epoch(log, model);
  }
  return model;
}

}  // namespace pathise
