#include "doctest.h"
#include "json.hpp"
#include "pathise/pipeline.hpp"
#include "test_util.hpp"

using namespace pathise;
namespace fs = std::filesystem;

namespace {

const fs::path kToy = fs::path(PATHISE_DATA_DIR) / "toy" / "toy.conf";

PipelineConfig toy(const fs::path& out) {
  PipelineConfig c = PipelineConfig::load(kToy);
  c.set("output_dir", out.string());
  return c;
}

struct Captured {
  std::string text;
  StageOptions options(bool force = false) {
    return StageOptions{force, [this](const std::string& line) { text += line + "\n"; }};
  }
};

// FNV-1a 64 over "key=value\n" for every key in sorted order.
std::string oracle_hash(const std::map<std::string, std::string>& values) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : values) {
    if (k == "output_dir" || k == "predictions_file") continue;
    for (unsigned char c : k + "=" + v + "\n") {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    // Wall-clock measurements; everything else must reproduce exactly.
    std::string name = e.path().filename().string();
    if (name == "timings.jsonl" || name.starts_with("efficiency.")) continue;
    out[name] = testutil::read_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("config files: comments, whitespace, relative paths and errors") {
  PipelineConfig c = PipelineConfig::parse("# header\n  max_hop =  3  # inline\n\nkg_file = graph/kg.tsv\n", "/data/run");
  CHECK(c.get("max_hop") == "3");
  CHECK(c.get_size("max_hop") == 3);
  CHECK(c.get_path("kg_file") == fs::path("/data/run/graph/kg.tsv"));
  CHECK(c.get("estimator.layers") == "2");
  CHECK(c.get_path("reference_paths").empty());

  CHECK_THROWS_WITH_AS(PipelineConfig::parse("max_hops = 3\n"), doctest::Contains("max_hops"), Error);
  CHECK_THROWS_WITH_AS(PipelineConfig::parse("max_hop 3\n"), doctest::Contains("line 1"), Error);
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/pathise.conf"), Error);

  PipelineConfig bad;
  bad.set("max_hop", "two");
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = PipelineConfig();
  bad.set("sampling.rho_other", "0.5");
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = PipelineConfig();
  bad.set("reasoner", "oracle");
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("overrides replace single keys") {
  PipelineConfig c;
  c.set_override("seed=42");
  CHECK(c.get_u64("seed") == 42);
  c.set_override("reasoner.system_prompt=Answer tersely = please");
  CHECK(c.get("reasoner.system_prompt") == "Answer tersely = please");
  CHECK_THROWS_AS(c.set_override("seed"), Error);
  CHECK_THROWS_AS(c.set_override("nope=1"), Error);
}

TEST_CASE("config hash follows FNV-1a over sorted settings and ignores output locations") {
  PipelineConfig c;
  std::map<std::string, std::string> values;
  for (const ConfigKey& k : config_schema()) values[k.name] = k.default_value;
  CHECK(c.hash() == oracle_hash(values));

  c.set("seed", "5");
  values["seed"] = "5";
  CHECK(c.hash() == oracle_hash(values));

  std::string before = c.hash();
  c.set("output_dir", "/tmp/elsewhere");
  c.set("predictions_file", "/tmp/p.jsonl");
  CHECK(c.hash() == before);
  c.set("max_hop", "3");
  CHECK(c.hash() != before);
}

TEST_CASE("toy pipeline is byte-identical across runs and stage reruns") {
  fs::path a = testutil::fresh_dir("pipe_a"), b = testutil::fresh_dir("pipe_b");
  Captured la, lb;
  REQUIRE(run_stage("pipeline", toy(a), la.options()) == kExitOk);
  REQUIRE(run_stage("pipeline", toy(b), lb.options()) == kExitOk);
  auto first = artifacts(a);
  auto second = artifacts(b);
  CHECK(first.size() >= 15);
  CHECK(fs::exists(a / "efficiency.json"));
  for (const auto& [name, bytes] : first) {
    REQUIRE_MESSAGE(second.count(name), name);
    CHECK_MESSAGE(bytes == second.at(name), name << " differs between runs");
  }

  Captured again;
  for (const char* stage : {"score", "train-generator", "generate", "evaluate"}) {
    REQUIRE(run_stage(stage, toy(a), again.options()) == kExitOk);
  }
  for (const auto& [name, bytes] : artifacts(a)) CHECK_MESSAGE(bytes == first.at(name), name << " changed on rerun");

  // Every artifact opens with the header line naming its stage and config.
  std::string hash = toy(a).hash();
  for (const char* name : {"candidates.jsonl", "scores.jsonl", "predictions.jsonl", "report.json"}) {
    std::string head = first.at(name).substr(0, first.at(name).find('\n'));
    auto j = nlohmann::json::parse(head);
    CHECK(j["config"] == hash);
    CHECK(j["version"] == kArtifactVersion);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("evaluate on an empty prediction file reports n = 0 and fails") {
  fs::path out = testutil::fresh_dir("pipe_empty");
  write_atomic(out / "empty.jsonl", "");
  PipelineConfig c = toy(out);
  REQUIRE(run_stage("ingest", c) == kExitOk);
  c.set("predictions_file", (out / "empty.jsonl").string());
  Captured log;
  CHECK(run_stage("evaluate", c, log.options()) != kExitOk);
  std::string report = testutil::read_file(out / "report.json");
  REQUIRE_FALSE(report.empty());
  auto body = nlohmann::json::parse(report.substr(report.find('\n') + 1));
  CHECK(body["n"] == 0);
  fs::remove_all(out);
}

TEST_CASE("stale and missing artifacts") {
  fs::path out = testutil::fresh_dir("pipe_stale");
  Captured missing;
  CHECK(run_stage("enumerate", toy(out), missing.options()) == kExitValidation);
  CHECK(missing.text.find("store.bin") != std::string::npos);

  REQUIRE(run_stage("ingest", toy(out)) == kExitOk);
  PipelineConfig changed = toy(out);
  changed.set("seed", "8");
  Captured stale;
  CHECK(run_stage("enumerate", changed, stale.options()) == kExitValidation);
  CHECK(stale.text.find("stale") != std::string::npos);
  CHECK(run_stage("enumerate", changed, Captured().options(true)) == kExitOk);

  CHECK(run_stage("no-such-stage", toy(out)) == kExitValidation);
  fs::remove_all(out);
}

TEST_CASE("atomic writes leave no temporary file") {
  fs::path out = testutil::fresh_dir("pipe_atomic");
  write_atomic(out / "x.txt", "one");
  write_atomic(out / "x.txt", "two");
  CHECK(testutil::read_file(out / "x.txt") == "two");
  CHECK(std::distance(fs::directory_iterator(out), fs::directory_iterator()) == 1);
  fs::remove_all(out);
}
