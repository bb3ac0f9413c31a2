#include "pathise/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pathise/eval.hpp"
#include "pathise/kg_store.hpp"
#include "pathise/path_engine.hpp"
#include "pathise/prompts.hpp"

namespace pathise {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr ConfigKey kSchema[] = {
    {"kg_file", "", "tab-separated triples (head, relation, tail)"},
    {"train_questions", "", "training questions JSONL"},
    {"test_questions", "", "test questions JSONL"},
    {"reference_paths", "", "reference paths JSONL for supervision-eval (optional)"},
    {"predictions_file", "", "predictions JSONL for evaluate; default <output_dir>/predictions.jsonl"},
    {"output_dir", "out", "artifact directory"},
    {"seed", "0", "global seed; every stage derives its own"},
    {"embedding", "builtin:256", "embedding provider: builtin:<dim> or file:<path>"},
    {"max_hop", "2", "maximum path length L"},
    {"candidate_cap", "0", "stop enumerating after this many paths (0 = no cap)"},
    {"estimator.model_dim", "128", "transformer width"},
    {"estimator.layers", "2", "transformer layers"},
    {"estimator.heads", "4", "attention heads"},
    {"estimator.ffn_factor", "4", "feed-forward expansion"},
    {"estimator.learning_rate", "0.0001", "AdamW learning rate"},
    {"estimator.weight_decay", "0.01", "AdamW weight decay"},
    {"estimator.epochs", "600", "training epochs"},
    {"sampling.max_paths", "1000", "per-question budget N_max"},
    {"sampling.rho_truncated", "0.1", "negative share: truncated"},
    {"sampling.rho_extended", "0.4", "negative share: extended"},
    {"sampling.rho_deviated", "0.3", "negative share: deviated"},
    {"sampling.rho_other", "0.2", "negative share: other"},
    {"top_t", "1", "pseudo-supervision paths per question (T)"},
    {"generator.mode", "builtin", "builtin or llm (prompted chat model)"},
    {"generator.relation_dim", "32", "relation embedding width"},
    {"generator.hidden", "64", "step network hidden units"},
    {"generator.learning_rate", "0.01", "AdamW learning rate"},
    {"generator.weight_decay", "0", "AdamW weight decay"},
    {"generator.epochs", "100", "distillation epochs"},
    {"generator.beam_size", "5", "paths generated per question (K)"},
    {"generator.max_length", "0", "decode horizon (0 = max_hop)"},
    {"reasoner", "mock-union", "mock-union or http"},
    {"reasoner.endpoint", "http://127.0.0.1:8000/v1/chat/completions", "chat-completion URL"},
    {"reasoner.model", "gpt-4o-mini", "model name sent to the endpoint"},
    {"reasoner.api_key_env", "OPENAI_API_KEY", "environment variable holding the API key"},
    {"reasoner.timeout", "60", "per-request timeout in seconds"},
    {"reasoner.max_retries", "3", "retries on transient failures"},
    {"reasoner.concurrency", "4", "requests in flight"},
    {"reasoner.system_prompt", "", "optional system message"},
};

constexpr const char* kStages[] = {"ingest",          "enumerate",  "build-bags",    "train-estimator",
                                   "score",           "select-supervision", "train-generator", "emit-finetune",
                                   "generate",        "ground",     "reason",        "evaluate",
                                   "supervision-eval", "pipeline"};

const std::set<std::string> kPathKeys = {"kg_file", "train_questions", "test_questions", "reference_paths",
                                         "predictions_file", "output_dir"};

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

std::span<const ConfigKey> config_schema() { return kSchema; }
std::span<const char* const> stage_names() { return kStages; }

PipelineConfig::PipelineConfig() {
  for (const ConfigKey& k : kSchema) values_[k.name] = k.default_value;
}

PipelineConfig PipelineConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw not_found_error("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.parent_path());
}

PipelineConfig PipelineConfig::parse(const std::string& text, const fs::path& base_dir) {
  PipelineConfig c;
  c.base_dir_ = base_dir;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw validation_error("config line " + std::to_string(n) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw validation_error("unknown config key: " + key);
  it->second = value;
}

void PipelineConfig::set_override(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) throw validation_error("override must be key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& PipelineConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw validation_error("unknown config key: " + key);
  return it->second;
}

std::size_t PipelineConfig::get_size(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw validation_error("config key " + key + " expects a nonnegative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t PipelineConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw validation_error("config key " + key + " expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

double PipelineConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw validation_error("config key " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

fs::path PipelineConfig::get_path(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) return {};
  fs::path p(v);
  return p.is_relative() && !base_dir_.empty() ? base_dir_ / p : p;
}

void PipelineConfig::validate() const {
  for (const ConfigKey& k : kSchema) {
    std::string name = k.name;
    if (kPathKeys.count(name) || name == "embedding" || name == "generator.mode" || name == "reasoner" ||
        name.rfind("reasoner.", 0) == 0) {
      continue;
    }
    if (name == "seed") {
      get_u64(name);
    } else if (name.find("rate") != std::string::npos || name.find("rho") != std::string::npos ||
               name.find("decay") != std::string::npos) {
      get_double(name);
    } else {
      get_size(name);
    }
  }
  get_double("reasoner.timeout");
  get_size("reasoner.max_retries");
  if (get_size("reasoner.concurrency") < 1) throw validation_error("reasoner.concurrency must be at least 1");
  if (get_size("max_hop") < 1) throw validation_error("max_hop must be at least 1");
  if (get_size("top_t") < 1) throw validation_error("top_t must be at least 1");
  if (get("output_dir").empty()) throw validation_error("output_dir must be set");
  const std::string& mode = get("generator.mode");
  if (mode != "builtin" && mode != "llm") throw validation_error("generator.mode must be builtin or llm");
  const std::string& reasoner = get("reasoner");
  if (reasoner != "mock-union" && reasoner != "http") throw validation_error("reasoner must be mock-union or http");
  const std::string& emb = get("embedding");
  if (emb.rfind("builtin:", 0) != 0 && emb.rfind("file:", 0) != 0) {
    throw validation_error("embedding must be builtin:<dim> or file:<path>");
  }
  estimator_config(8).validate();
  sampling_config().validate();
  generator_config({"r"}, 8).validate();
}

std::string PipelineConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : values_) {
    if (k == "output_dir" || k == "predictions_file") continue;
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string PipelineConfig::dump() const {
  std::string out;
  for (const ConfigKey& k : kSchema) out += std::string(k.name) + " = " + get(k.name) + "\n";
  return out;
}

std::uint64_t PipelineConfig::stage_seed(const std::string& stage) const { return derive_seed(get_u64("seed"), stage); }

EstimatorConfig PipelineConfig::estimator_config(std::size_t input_dim) const {
  EstimatorConfig c;
  c.input_dim = input_dim;
  c.model_dim = get_size("estimator.model_dim");
  c.layers = get_size("estimator.layers");
  c.heads = get_size("estimator.heads");
  c.ffn_factor = get_size("estimator.ffn_factor");
  c.max_positions = get_size("max_hop") + 1;
  c.learning_rate = get_double("estimator.learning_rate");
  c.weight_decay = get_double("estimator.weight_decay");
  c.epochs = get_size("estimator.epochs");
  c.seed = stage_seed("train-estimator");
  return c;
}

NegativeSamplingConfig PipelineConfig::sampling_config() const {
  NegativeSamplingConfig c;
  c.max_paths = get_size("sampling.max_paths");
  c.rho_truncated = get_double("sampling.rho_truncated");
  c.rho_extended = get_double("sampling.rho_extended");
  c.rho_deviated = get_double("sampling.rho_deviated");
  c.rho_other = get_double("sampling.rho_other");
  c.seed = stage_seed("build-bags");
  return c;
}

GeneratorConfig PipelineConfig::generator_config(std::vector<std::string> labels, std::size_t input_dim) const {
  GeneratorConfig c;
  c.relation_labels = std::move(labels);
  c.input_dim = input_dim;
  c.relation_dim = get_size("generator.relation_dim");
  c.hidden = get_size("generator.hidden");
  std::size_t len = get_size("generator.max_length");
  c.max_length = len ? len : get_size("max_hop");
  c.beam_size = get_size("generator.beam_size");
  c.learning_rate = get_double("generator.learning_rate");
  c.weight_decay = get_double("generator.weight_decay");
  c.epochs = get_size("generator.epochs");
  c.seed = stage_seed("train-generator");
  return c;
}

HttpChatConfig PipelineConfig::chat_config() const {
  HttpChatConfig c;
  c.endpoint = get("reasoner.endpoint");
  c.model = get("reasoner.model");
  c.api_key_env = get("reasoner.api_key_env");
  c.timeout_seconds = get_double("reasoner.timeout");
  c.max_retries = get_size("reasoner.max_retries");
  c.system_prompt = get("reasoner.system_prompt");
  return c;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

// ---- artifacts -------------------------------------------------------------

std::string header_line(const std::string& stage, const std::string& hash) {
  return json{{"artifact", stage}, {"version", kArtifactVersion}, {"config", hash}}.dump() + "\n";
}

struct LoadedQuestion {
  QuestionSample sample;
  std::vector<std::string> gold;  // answer labels as written
};

class Run {
 public:
  Run(const PipelineConfig& config, const StageOptions& options)
      : cfg_(config), opt_(options), out_(config.get_path("output_dir")), hash_(config.hash()) {}

  void log(const std::string& msg) const {
    if (opt_.log) opt_.log(msg);
  }

  const PipelineConfig& cfg() const { return cfg_; }
  fs::path file(const std::string& name) const { return out_ / name; }

  void write(const std::string& name, const std::string& stage, const std::string& body) const {
    fs::create_directories(out_);
    write_atomic(file(name), header_line(stage, hash_) + body);
  }

  // Returns the body after the header line. With `optional_header`, files
  // without a header are accepted as plain data.
  std::string read(const fs::path& path, const std::string& stage, bool optional_header = false) const {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw not_found_error("missing artifact " + path.string() + " (run stage '" + stage + "' first)");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    auto nl = text.find('\n');
    std::string first = text.substr(0, nl);
    json h;
    try {
      h = json::parse(first);
    } catch (const json::exception&) {
      h = nullptr;
    }
    if (!h.is_object() || !h.contains("artifact")) {
      if (optional_header) return text;
      throw format_error("artifact " + path.string() + " has no header line");
    }
    if (h.value("artifact", "") != stage) {
      throw format_error("artifact " + path.string() + " was written by stage '" + h.value("artifact", "") +
                         "', expected '" + stage + "'");
    }
    if (h.value("version", 0) != kArtifactVersion) {
      throw format_error("artifact " + path.string() + " has version " + std::to_string(h.value("version", 0)) +
                         ", expected " + std::to_string(kArtifactVersion));
    }
    if (h.value("config", "") != hash_ && !opt_.force) {
      throw validation_error("stale artifact " + path.string() + ": written under config " + h.value("config", "") +
                             ", current config is " + hash_ + " (rerun the stage or pass --force)");
    }
    return nl == std::string::npos ? std::string() : text.substr(nl + 1);
  }

  std::string read_named(const std::string& name, const std::string& stage) const { return read(file(name), stage); }

  std::vector<json> read_jsonl(const fs::path& path, const std::string& stage, bool optional_header = false) const {
    return parse_jsonl(read(path, stage, optional_header), path.string());
  }

  static std::vector<json> parse_jsonl(const std::string& body, const std::string& what) {
    std::vector<json> out;
    std::istringstream in(body);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (trim(line).empty()) continue;
      try {
        out.push_back(json::parse(line));
      } catch (const json::exception& e) {
        throw format_error(what + " line " + std::to_string(n) + ": " + e.what());
      }
    }
    return out;
  }

  const TripleStore& store() {
    if (!store_) {
      std::string body = read_named("store.bin", "ingest");
      std::istringstream in(body);
      store_ = load_snapshot(in);
    }
    return *store_;
  }

  const EmbeddingProvider& provider() {
    if (!provider_) provider_ = make_provider(cfg_.get("embedding"));
    return *provider_;
  }

  const std::vector<Embedding>& relation_embeddings() {
    if (!rel_emb_) rel_emb_ = embed_relations(provider(), store());
    return *rel_emb_;
  }

  std::vector<LoadedQuestion> questions(const std::string& key) {
    fs::path path = cfg_.get_path(key);
    if (path.empty()) throw validation_error("config key " + key + " is not set");
    std::ifstream in(path);
    if (!in) throw not_found_error("cannot open question file " + path.string());
    const TripleStore& kg = store();
    std::vector<LoadedQuestion> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (trim(line).empty()) continue;
      std::string where = path.string() + " line " + std::to_string(n);
      LoadedQuestion q;
      try {
        json j = json::parse(line);
        q.sample.id = j.at("id").get<std::string>();
        q.sample.question = j.at("question").get<std::string>();
        for (const auto& e : j.at("question_entities")) {
          auto id = kg.find_entity(e.get<std::string>());
          if (id) {
            q.sample.question_entities.push_back(*id);
          } else {
            log("warning: " + where + ": question entity '" + e.get<std::string>() + "' is not in the graph");
          }
        }
        if (j.contains("answers")) {
          for (const auto& a : j.at("answers")) {
            q.gold.push_back(a.get<std::string>());
            if (auto id = kg.find_entity(a.get<std::string>())) q.sample.answers.push_back(*id);
          }
        }
      } catch (const json::exception& e) {
        throw format_error(where + ": " + e.what());
      }
      if (!ids.insert(q.sample.id).second) throw validation_error(where + ": duplicate question id " + q.sample.id);
      out.push_back(std::move(q));
    }
    return out;
  }

  json path_json(const RelationPath& p) {
    json arr = json::array();
    for (RelationId r : p.relations) arr.push_back(store().relation_label(r));
    return arr;
  }

  RelationPath path_from_json(const json& arr) {
    RelationPath p;
    for (const auto& r : arr) p.relations.push_back(store().relation(r.get<std::string>()));
    return p;
  }

  std::vector<RelationPath> paths_from_json(const json& arr) {
    std::vector<RelationPath> out;
    for (const auto& p : arr) out.push_back(path_from_json(p));
    return out;
  }

  void record_timing(const std::string& stage, double seconds, std::size_t questions) const {
    fs::create_directories(out_);
    std::ofstream t(file("timings.jsonl"), std::ios::app);
    t << json{{"stage", stage}, {"seconds", seconds}, {"questions", questions}}.dump() << "\n";
  }

 private:
  const PipelineConfig& cfg_;
  const StageOptions& opt_;
  fs::path out_;
  std::string hash_;
  std::optional<TripleStore> store_;
  std::unique_ptr<EmbeddingProvider> provider_;
  std::optional<std::vector<Embedding>> rel_emb_;
};

std::string jsonl(const std::vector<json>& records) {
  std::string out;
  for (const json& r : records) out += r.dump() + "\n";
  return out;
}

std::map<std::string, json> by_id(const std::vector<json>& records) {
  std::map<std::string, json> out;
  for (const json& r : records) out[r.at("id").get<std::string>()] = r;
  return out;
}

// ---- stages ----------------------------------------------------------------

std::size_t stage_ingest(Run& run) {
  fs::path kg = run.cfg().get_path("kg_file");
  if (kg.empty()) throw validation_error("config key kg_file is not set");
  LoadReport report;
  TripleStore store = load_triples(kg, &report);
  std::ostringstream bin;
  save_snapshot(store, bin);
  run.write("store.bin", "ingest", bin.str());
  run.log("ingest: " + std::to_string(report.unique_triples) + " triples (" + std::to_string(report.duplicates) +
          " duplicates dropped), " + std::to_string(store.entity_count()) + " entities, " +
          std::to_string(store.relation_count()) + " relations");
  return 0;
}

std::size_t stage_enumerate(Run& run) {
  auto qs = run.questions("train_questions");
  EnumerationOptions opt{run.cfg().get_size("max_hop"), run.cfg().get_size("candidate_cap")};
  std::vector<json> records;
  std::size_t capped = 0;
  for (const auto& q : qs) {
    auto result = enumerate_candidate_paths(run.store(), q.sample.question_entities, opt);
    capped += result.capped;
    json paths = json::array();
    for (const auto& p : result.paths) paths.push_back(run.path_json(p));
    records.push_back({{"id", q.sample.id}, {"paths", paths}, {"capped", result.capped}});
  }
  run.write("candidates.jsonl", "enumerate", jsonl(records));
  run.log("enumerate: " + std::to_string(qs.size()) + " questions, " + std::to_string(capped) + " capped");
  return qs.size();
}

std::size_t stage_build_bags(Run& run) {
  auto qs = run.questions("train_questions");
  auto candidates = by_id(run.read_jsonl(run.file("candidates.jsonl"), "enumerate"));
  NegativeSamplingConfig sampling = run.cfg().sampling_config();
  const TripleStore& kg = run.store();
  std::vector<json> records;
  std::size_t unsupervised = 0;
  for (const auto& q : qs) {
    auto it = candidates.find(q.sample.id);
    if (it == candidates.end()) throw validation_error("candidates.jsonl has no entry for question " + q.sample.id);
    auto cand = run.paths_from_json(it->second.at("paths"));
    BagConstruction bags = build_bags(kg, q.sample, cand);

    std::vector<RelationPath> weak;
    for (const RelationPath& p : cand) {
      bool positive = std::any_of(bags.positive.begin(), bags.positive.end(), [&](const PositiveBag& b) {
        return std::find(b.paths.begin(), b.paths.end(), p) != b.paths.end();
      });
      if (positive) weak.push_back(p);
    }
    Embedding qv = run.provider().embed(q.sample.question);
    if (weak.size() > sampling.max_paths) {
      run.log("warning: question " + q.sample.id + " keeps " + std::to_string(sampling.max_paths) + " of " +
              std::to_string(weak.size()) + " weakly supervised paths");
      weak = cap_weak_positives(sampling, weak, qv, run.relation_embeddings());
    }
    NegativePartition part = classify_negatives(weak, bags.negatives);
    auto negatives = sample_negatives(sampling, q.sample.id, weak, part, qv, run.relation_embeddings());

    json weak_json = json::array(), neg_json = json::array(), bag_json = json::array(), uncovered = json::array();
    for (const auto& p : weak) weak_json.push_back(run.path_json(p));
    for (const auto& p : negatives) neg_json.push_back(run.path_json(p));
    for (const PositiveBag& b : bags.positive) {
      json members = json::array();
      for (const auto& p : b.paths) {
        auto at = std::find(weak.begin(), weak.end(), p);
        if (at != weak.end()) members.push_back(at - weak.begin());
      }
      if (!members.empty()) bag_json.push_back({{"answer", kg.entity_label(b.answer)}, {"members", members}});
    }
    for (EntityId a : bags.uncovered_answers) uncovered.push_back(kg.entity_label(a));
    if (weak.empty()) {
      ++unsupervised;
      run.log("warning: question " + q.sample.id + " has no weakly supervised paths");
    }
    records.push_back({{"id", q.sample.id},
                       {"weak", weak_json},
                       {"positive_bags", bag_json},
                       {"negatives", neg_json},
                       {"partition",
                        {{"truncated", part.truncated.size()},
                         {"extended", part.extended.size()},
                         {"deviated", part.deviated.size()},
                         {"other", part.other.size()}}},
                       {"uncovered_answers", uncovered}});
  }
  run.write("bags.jsonl", "build-bags", jsonl(records));
  run.log("build-bags: " + std::to_string(qs.size()) + " questions, " + std::to_string(unsupervised) +
          " without weak paths");
  return qs.size();
}

std::size_t stage_train_estimator(Run& run) {
  auto qs = run.questions("train_questions");
  auto bags = by_id(run.read_jsonl(run.file("bags.jsonl"), "build-bags"));
  std::vector<MilExample> dataset;
  for (const auto& q : qs) {
    auto it = bags.find(q.sample.id);
    if (it == bags.end()) throw validation_error("bags.jsonl has no entry for question " + q.sample.id);
    const json& b = it->second;
    if (b.at("weak").empty()) continue;
    MilExample ex;
    ex.id = q.sample.id;
    ex.question = run.provider().embed(q.sample.question);
    ex.paths = run.paths_from_json(b.at("weak"));
    for (const auto& bag : b.at("positive_bags")) ex.positive_bags.push_back(bag.at("members").get<std::vector<std::size_t>>());
    for (const auto& n : b.at("negatives")) {
      ex.negatives.push_back(ex.paths.size());
      ex.paths.push_back(run.path_from_json(n));
    }
    dataset.push_back(std::move(ex));
  }
  if (dataset.empty()) throw validation_error("no training question has a weakly supervised path");
  EstimatorConfig config = run.cfg().estimator_config(run.provider().dimension());
  std::vector<EpochLog> history;
  std::size_t every = std::max<std::size_t>(1, config.epochs / 10);
  MilEstimator model = train_estimator(config, dataset, run.relation_embeddings(), &history, [&](const EpochLog& e) {
    if (e.epoch % every == 0 || e.epoch == config.epochs) {
      run.log("train-estimator: epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
    }
  });
  std::ostringstream bin;
  save_checkpoint(model.to_checkpoint(), bin);
  run.write("estimator.ckpt", "train-estimator", bin.str());
  std::vector<json> log;
  for (const auto& e : history) log.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}});
  run.write("estimator_history.jsonl", "train-estimator", jsonl(log));
  return dataset.size();
}

MilEstimator load_estimator(Run& run) {
  std::istringstream in(run.read_named("estimator.ckpt", "train-estimator"));
  return MilEstimator::from_checkpoint(load_checkpoint(in));
}

std::size_t stage_score(Run& run) {
  auto qs = run.questions("train_questions");
  auto bags = by_id(run.read_jsonl(run.file("bags.jsonl"), "build-bags"));
  MilEstimator model = load_estimator(run);
  std::vector<json> records;
  for (const auto& q : qs) {
    auto it = bags.find(q.sample.id);
    if (it == bags.end() || it->second.at("weak").empty()) continue;
    auto weak = run.paths_from_json(it->second.at("weak"));
    auto scores = model.score_paths(run.provider().embed(q.sample.question), weak, run.relation_embeddings());
    records.push_back({{"id", q.sample.id}, {"paths", it->second.at("weak")}, {"scores", scores}});
  }
  run.write("scores.jsonl", "score", jsonl(records));
  return records.size();
}

std::size_t stage_select(Run& run) {
  auto scored = run.read_jsonl(run.file("scores.jsonl"), "score");
  std::size_t top_t = run.cfg().get_size("top_t");
  std::vector<json> records;
  for (const json& r : scored) {
    std::string id = r.at("id");
    auto paths = run.paths_from_json(r.at("paths"));
    auto values = r.at("scores").get<std::vector<double>>();
    std::vector<PathScore> scores;
    for (std::size_t i = 0; i < paths.size(); ++i) scores.push_back({paths[i], values.at(i)});
    PseudoSupervision sup = select_pseudo_supervision(id, scores, top_t);
    json ps = json::array();
    for (const auto& p : sup.paths) ps.push_back(run.path_json(p));
    records.push_back({{"id", id}, {"paths", ps}, {"scores", sup.scores}});
  }
  run.write("supervision.jsonl", "select-supervision", jsonl(records));
  return records.size();
}

std::vector<std::string> relation_vocab(const TripleStore& kg) {
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < kg.relation_count(); ++r) {
    labels.push_back(kg.relation_label(RelationId{static_cast<std::uint32_t>(r)}));
  }
  return labels;
}

std::size_t stage_train_generator(Run& run) {
  auto qs = run.questions("train_questions");
  auto sup = by_id(run.read_jsonl(run.file("supervision.jsonl"), "select-supervision"));
  std::vector<DistillExample> dataset;
  for (const auto& q : qs) {
    auto it = sup.find(q.sample.id);
    if (it == sup.end()) continue;
    dataset.push_back({q.sample.id, run.provider().embed(q.sample.question), run.paths_from_json(it->second.at("paths"))});
  }
  if (dataset.empty()) throw validation_error("no pseudo supervision to distill from");
  GeneratorConfig config = run.cfg().generator_config(relation_vocab(run.store()), run.provider().dimension());
  std::vector<DistillLog> history;
  std::size_t every = std::max<std::size_t>(1, config.epochs / 10);
  PathGenerator model = distill(config, dataset, &history, [&](const DistillLog& e, const PathGenerator&) {
    if (e.epoch % every == 0 || e.epoch == config.epochs) {
      run.log("train-generator: epoch " + std::to_string(e.epoch) + " nll " + std::to_string(e.mean_nll));
    }
  });
  std::ostringstream bin;
  save_checkpoint(model.to_checkpoint(), bin);
  run.write("generator.ckpt", "train-generator", bin.str());
  std::vector<json> log;
  for (const auto& e : history) log.push_back({{"epoch", e.epoch}, {"mean_nll", e.mean_nll}});
  run.write("generator_history.jsonl", "train-generator", jsonl(log));
  return dataset.size();
}

std::size_t stage_emit_finetune(Run& run) {
  auto qs = run.questions("train_questions");
  auto sup = by_id(run.read_jsonl(run.file("supervision.jsonl"), "select-supervision"));
  std::vector<json> records;
  for (const auto& q : qs) {
    auto it = sup.find(q.sample.id);
    if (it == sup.end()) continue;
    auto paths = run.paths_from_json(it->second.at("paths"));
    for (const FinetuneRecord& r : emit_finetune_dataset(run.store(), q.sample, paths)) {
      records.push_back({{"id", r.id}, {"instruction", r.instruction}, {"input", r.input}, {"output", r.output}});
    }
  }
  run.write("finetune.jsonl", "emit-finetune", jsonl(records));
  return records.size();
}

std::size_t stage_generate(Run& run) {
  auto qs = run.questions("test_questions");
  std::vector<json> records;
  if (run.cfg().get("generator.mode") == "builtin") {
    std::istringstream in(run.read_named("generator.ckpt", "train-generator"));
    PathGenerator model = PathGenerator::from_checkpoint(load_checkpoint(in));
    if (model.config().relation_labels != relation_vocab(run.store())) {
      throw validation_error("generator.ckpt vocabulary does not match the ingested graph");
    }
    std::size_t k = run.cfg().get_size("generator.beam_size");
    for (const auto& q : qs) {
      auto beams = model.beam_search(run.provider().embed(q.sample.question), k);
      json paths = json::array(), lps = json::array();
      for (const auto& b : beams) {
        paths.push_back(run.path_json(b.path));
        lps.push_back(b.log_prob);
      }
      records.push_back({{"id", q.sample.id},
                         {"paths", paths},
                         {"logprobs", lps},
                         {"usage", {{"calls", 0}, {"input_tokens", 0}, {"output_tokens", 0}}}});
    }
  } else {
    HttpChatClient client(run.cfg().chat_config());
    for (const auto& q : qs) {
      json paths = json::array(), unresolved = json::array();
      std::set<std::vector<std::string>> seen;
      Usage usage;
      // One prompt per topic entity; the generated paths are unioned.
      for (EntityId e : q.sample.question_entities) {
        std::string prompt = render_generation_prompt(q.sample.question, run.store().entity_label(e));
        ChatReply reply = client.complete({{"user", prompt}});
        usage.calls += 1;
        usage.input_tokens += reply.prompt_tokens.value_or(whitespace_token_count(prompt));
        usage.output_tokens += reply.completion_tokens.value_or(whitespace_token_count(reply.content));
        ParsedPath parsed = parse_generated_path(reply.content, run.store());
        if (!parsed.ok) {
          run.log("warning: question " + q.sample.id + ": " + parsed.error);
          continue;
        }
        for (const auto& u : parsed.unresolved) unresolved.push_back(u);
        if (parsed.path && seen.insert(parsed.labels).second) paths.push_back(parsed.labels);
      }
      records.push_back({{"id", q.sample.id},
                         {"paths", paths},
                         {"logprobs", nullptr},
                         {"unresolved", unresolved},
                         {"usage",
                          {{"calls", usage.calls},
                           {"input_tokens", usage.input_tokens},
                           {"output_tokens", usage.output_tokens}}}});
    }
  }
  run.write("generated.jsonl", "generate", jsonl(records));
  return qs.size();
}

std::size_t stage_ground(Run& run) {
  auto qs = run.questions("test_questions");
  auto gen = by_id(run.read_jsonl(run.file("generated.jsonl"), "generate"));
  std::vector<json> records;
  for (const auto& q : qs) {
    auto it = gen.find(q.sample.id);
    if (it == gen.end()) throw validation_error("generated.jsonl has no entry for question " + q.sample.id);
    auto paths = run.paths_from_json(it->second.at("paths"));
    auto evidence = ground_paths(run.store(), q.sample.question_entities, paths);
    json ev = json::array();
    for (const GroundedEvidence& g : evidence) {
      EvidenceText t = to_text(run.store(), g);
      ev.push_back({{"topic_entity", t.topic_entity}, {"relations", t.relations}, {"end_entities", t.end_entities}});
    }
    if (evidence.empty()) run.log("warning: question " + q.sample.id + " has no grounded evidence");
    records.push_back({{"id", q.sample.id}, {"evidence", ev}});
  }
  run.write("evidence.jsonl", "ground", jsonl(records));
  return qs.size();
}

std::size_t stage_reason(Run& run) {
  auto qs = run.questions("test_questions");
  auto ev = by_id(run.read_jsonl(run.file("evidence.jsonl"), "ground"));
  std::vector<ReasonerRequest> requests;
  for (const auto& q : qs) {
    auto it = ev.find(q.sample.id);
    if (it == ev.end()) throw validation_error("evidence.jsonl has no entry for question " + q.sample.id);
    ReasonerRequest r{q.sample.id, q.sample.question, {}};
    for (const json& e : it->second.at("evidence")) {
      r.evidence.push_back({e.at("topic_entity"), e.at("relations").get<std::vector<std::string>>(),
                            e.at("end_entities").get<std::vector<std::string>>()});
    }
    requests.push_back(std::move(r));
  }
  std::vector<ReasonerResponse> responses;
  if (run.cfg().get("reasoner") == "mock-union") {
    for (const auto& r : requests) responses.push_back(mock_union_reasoner(r));
  } else {
    HttpChatClient client(run.cfg().chat_config());
    std::vector<TranscriptEntry> transcript;
    responses = reason_all(requests, client, run.cfg().get_size("reasoner.concurrency"),
                           run.cfg().get("reasoner.system_prompt"), &transcript);
    std::string lines;
    for (const auto& t : transcript) lines += transcript_line(t) + "\n";
    run.write("transcript.jsonl", "reason", lines);
  }
  std::vector<json> records;
  for (const auto& r : responses) {
    records.push_back({{"id", r.id},
                       {"answers", r.answers},
                       {"raw", r.raw},
                       {"usage",
                        {{"calls", r.usage.calls},
                         {"input_tokens", r.usage.input_tokens},
                         {"output_tokens", r.usage.output_tokens}}}});
  }
  run.write("predictions.jsonl", "reason", jsonl(records));
  return records.size();
}

Usage usage_of(const json& r) {
  Usage u;
  if (r.contains("usage")) {
    const json& j = r.at("usage");
    u.calls = j.value("calls", 0u);
    u.input_tokens = j.value("input_tokens", 0u);
    u.output_tokens = j.value("output_tokens", 0u);
  }
  return u;
}

// Total seconds of the latest recorded run of `stage`.
std::optional<double> stage_seconds(Run& run, const std::string& stage) {
  std::ifstream in(run.file("timings.jsonl"));
  std::optional<double> out;
  std::string line;
  while (std::getline(in, line)) {
    try {
      json j = json::parse(line);
      if (j.value("stage", "") == stage) out = j.value("seconds", 0.0);
    } catch (const json::exception&) {
    }
  }
  return out;
}

// Returns the number of evaluated questions; zero makes the stage fail.
std::size_t stage_evaluate(Run& run) {
  fs::path pred_path = run.cfg().get_path("predictions_file");
  if (pred_path.empty()) pred_path = run.file("predictions.jsonl");
  auto preds = run.read_jsonl(pred_path, "reason", true);
  auto qs = run.questions("test_questions");
  std::map<std::string, const LoadedQuestion*> gold;
  for (const auto& q : qs) gold[q.sample.id] = &q;

  std::map<std::string, json> evidence;
  if (fs::exists(run.file("evidence.jsonl"))) evidence = by_id(run.read_jsonl(run.file("evidence.jsonl"), "ground"));

  std::vector<QuestionResult> results;
  std::vector<Usage> reason_usage;
  for (const json& p : preds) {
    std::string id = p.at("id");
    auto g = gold.find(id);
    if (g == gold.end()) {
      run.log("warning: prediction for unknown question " + id + " skipped");
      continue;
    }
    QuestionResult r;
    r.id = id;
    r.predicted = p.at("answers").get<std::vector<std::string>>();
    r.gold = g->second->gold;
    if (auto e = evidence.find(id); e != evidence.end()) {
      for (const json& item : e->second.at("evidence")) {
        for (const auto& end : item.at("end_entities")) r.grounded_ends.push_back(end);
      }
    }
    r.usage = usage_of(p);
    reason_usage.push_back(r.usage);
    results.push_back(std::move(r));
  }
  MetricReport report = evaluate(results);
  run.write("report.json", "evaluate", report.to_json() + "\n");
  run.write("report.txt", "evaluate", report.to_table());
  run.log("evaluate:\n" + report.to_table());

  std::vector<StageEfficiency> eff;
  if (fs::exists(run.file("generated.jsonl"))) {
    std::vector<Usage> gen_usage;
    for (const json& g : run.read_jsonl(run.file("generated.jsonl"), "generate")) gen_usage.push_back(usage_of(g));
    eff.push_back(efficiency_report("generate", gen_usage));
  }
  eff.push_back(efficiency_report("reason", reason_usage));
  for (StageEfficiency& s : eff) {
    if (auto secs = stage_seconds(run, s.stage); secs && s.questions) s.seconds = *secs / static_cast<double>(s.questions);
  }
  run.write("efficiency.json", "evaluate", efficiency_json(eff) + "\n");
  run.write("efficiency.txt", "evaluate", efficiency_table(eff));
  if (report.n == 0) throw validation_error("no predictions to evaluate (n = 0)");
  return report.n;
}

std::size_t stage_supervision_eval(Run& run) {
  fs::path ref_path = run.cfg().get_path("reference_paths");
  if (ref_path.empty()) throw validation_error("config key reference_paths is not set");
  std::ifstream in(ref_path);
  if (!in) throw not_found_error("cannot open reference path file " + ref_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::map<std::string, std::vector<RelationPath>> reference, selected;
  for (const json& r : Run::parse_jsonl(ss.str(), ref_path.string())) {
    auto& paths = reference[r.at("id").get<std::string>()];
    for (const json& p : r.at("paths")) {
      RelationPath path;
      bool known = true;
      for (const auto& label : p) {
        auto id = run.store().find_relation(label.get<std::string>());
        if (!id) {
          known = false;
          break;
        }
        path.relations.push_back(*id);
      }
      if (known) paths.push_back(std::move(path));  // unknown relations can never be selected
    }
  }
  for (const json& r : run.read_jsonl(run.file("supervision.jsonl"), "select-supervision")) {
    selected[r.at("id")] = run.paths_from_json(r.at("paths"));
  }
  std::size_t top_t = run.cfg().get_size("top_t");
  SupervisionReport rep = supervision_hits_at_t(selected, reference, top_t);
  for (const auto& id : rep.missing_reference) run.log("warning: no reference paths for question " + id);
  json j = {{"T", top_t}, {"n", rep.n}, {"hits", rep.hits}, {"hits_at_t", rep.hits_at_t},
            {"missing_reference", rep.missing_reference}};
  run.write("supervision_report.json", "supervision-eval", j.dump(2) + "\n");
  run.log("supervision-eval: Hits@" + std::to_string(top_t) + " = " + std::to_string(rep.hits_at_t) + " over " +
          std::to_string(rep.n) + " questions");
  return rep.n;
}

using StageFn = std::size_t (*)(Run&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> t = {
      {"ingest", stage_ingest},
      {"enumerate", stage_enumerate},
      {"build-bags", stage_build_bags},
      {"train-estimator", stage_train_estimator},
      {"score", stage_score},
      {"select-supervision", stage_select},
      {"train-generator", stage_train_generator},
      {"emit-finetune", stage_emit_finetune},
      {"generate", stage_generate},
      {"ground", stage_ground},
      {"reason", stage_reason},
      {"evaluate", stage_evaluate},
      {"supervision-eval", stage_supervision_eval},
  };
  return t;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::kValidation:
    case Error::Kind::kNotFound:
    case Error::Kind::kFormat: return kExitValidation;
    case Error::Kind::kRuntime:
    case Error::Kind::kNetwork: return kExitRuntime;
  }
  return kExitRuntime;
}

int run_one(const std::string& name, const PipelineConfig& config, const StageOptions& options) {
  auto fn = stage_table().find(name);
  auto log = [&](const std::string& m) {
    if (options.log) options.log(m);
  };
  Run run(config, options);
  auto t0 = std::chrono::steady_clock::now();
  try {
    std::size_t questions = fn->second(run);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.record_timing(name, secs, questions);
    return kExitOk;
  } catch (const Error& e) {
    log("error in stage " + name + ": " + e.what());
    return exit_code_for(e);
  } catch (const json::exception& e) {
    log("error in stage " + name + ": malformed artifact or input: " + e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    log("error in stage " + name + ": " + e.what());
    return kExitRuntime;
  }
}

}  // namespace

int run_stage(const std::string& name, const PipelineConfig& config, const StageOptions& options) {
  try {
    config.validate();
  } catch (const Error& e) {
    if (options.log) options.log(std::string("invalid configuration: ") + e.what());
    return kExitValidation;
  }
  if (name == "pipeline") {
    for (const char* stage : kStages) {
      std::string s = stage;
      if (s == "pipeline") break;
      if (s == "supervision-eval" && config.get("reference_paths").empty()) continue;
      if (options.log) options.log("== " + s);
      int rc = run_one(s, config, options);
      if (rc != kExitOk) return rc;
    }
    return kExitOk;
  }
  if (!stage_table().count(name)) {
    if (options.log) options.log("unknown stage: " + name);
    return kExitValidation;
  }
  return run_one(name, config, options);
}

}  // namespace pathise
