// Command-line driver over the C interface.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pathise/pathise.h"

namespace {

void print_line(const char* text, void*) { std::cout << text << "\n"; }
void print_raw(const char* text, void*) { std::cout << text; }
void print_log(const char* text, void*) { std::cerr << text << "\n"; }

int fail(pathise_status st) {
  std::cerr << "error: " << pathise_last_error() << "\n";
  return st == PATHISE_ERR_RUNTIME || st == PATHISE_ERR_NETWORK ? 2 : 1;
}

struct StageArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string mock_reasoner;
  bool force = false;
};

int run_stage(const std::string& stage, const StageArgs& a) {
  pathise_config* cfg = nullptr;
  pathise_status st = a.config.empty() ? pathise_config_new(&cfg) : pathise_config_load(a.config.c_str(), &cfg);
  if (st != PATHISE_OK) return fail(st);
  for (const auto& o : a.overrides) {
    if ((st = pathise_config_override(cfg, o.c_str())) != PATHISE_OK) {
      pathise_config_free(cfg);
      return fail(st);
    }
  }
  if (!a.output_dir.empty()) pathise_config_set(cfg, "output_dir", a.output_dir.c_str());
  if (!a.mock_reasoner.empty()) {
    if (a.mock_reasoner != "union") {
      std::cerr << "error: unknown mock reasoner '" << a.mock_reasoner << "' (supported: union)\n";
      pathise_config_free(cfg);
      return 1;
    }
    pathise_config_set(cfg, "reasoner", "mock-union");
  }
  int rc = pathise_run_stage(cfg, stage.c_str(), a.force ? 1 : 0, print_log, nullptr);
  pathise_config_free(cfg);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relation-path supervision, generation and reasoning over knowledge graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pathise_version());

  StageArgs stage_args;
  std::string selected_stage;
  for (std::size_t i = 0; i < pathise_stage_count(); ++i) {
    std::string name = pathise_stage_name(i);
    auto* sub = app.add_subcommand(name, name == "pipeline" ? "run every stage in order" : "run the " + name + " stage");
    sub->add_option("-c,--config", stage_args.config, "configuration file (key = value lines)");
    sub->add_option("-s,--set", stage_args.overrides, "override a key, e.g. --set max_hop=3");
    sub->add_option("-o,--output-dir", stage_args.output_dir, "artifact directory");
    sub->add_option("--mock-reasoner", stage_args.mock_reasoner, "offline reasoner (union)");
    sub->add_flag("-f,--force", stage_args.force, "accept artifacts written under a different configuration");
    sub->callback([&selected_stage, name] { selected_stage = name; });
  }

  std::string cfg_path;
  std::vector<std::string> cfg_overrides;
  bool show_schema = false, show_hash = false;
  auto* config = app.add_subcommand("config", "print the effective configuration, its hash, or the key schema");
  config->add_option("-c,--config", cfg_path, "configuration file");
  config->add_option("-s,--set", cfg_overrides, "override a key");
  config->add_flag("--schema", show_schema, "list every key with its default");
  config->add_flag("--hash", show_hash, "print only the configuration hash");

  auto* query = app.add_subcommand("query", "inspect a knowledge graph");
  query->require_subcommand(1);
  std::string kg, start;
  std::vector<std::string> relations;
  std::size_t max_hop = 2;
  auto* reach = query->add_subcommand("reachable", "entities reached from a start entity along a relation path");
  reach->add_option("--kg", kg, "triples file or store snapshot")->required();
  reach->add_option("--start", start, "start entity label")->required();
  reach->add_option("--relation", relations, "relation label; repeat in path order")->required();
  auto* paths = query->add_subcommand("paths", "relation paths starting at an entity");
  paths->add_option("--kg", kg, "triples file or store snapshot")->required();
  paths->add_option("--start", start, "start entity label")->required();
  paths->add_option("--max-hop", max_hop, "maximum path length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;  // usage errors are validation failures
  }

  if (!selected_stage.empty()) return run_stage(selected_stage, stage_args);

  if (config->parsed()) {
    if (show_schema) {
      pathise_config_schema(
          [](const char* key, const char* def, const char* help, void*) {
            std::printf("%-26s %-14s %s\n", key, *def ? def : "\"\"", help);
          },
          nullptr);
      return 0;
    }
    pathise_config* cfg = nullptr;
    pathise_status st = cfg_path.empty() ? pathise_config_new(&cfg) : pathise_config_load(cfg_path.c_str(), &cfg);
    if (st != PATHISE_OK) return fail(st);
    for (const auto& o : cfg_overrides) {
      if ((st = pathise_config_override(cfg, o.c_str())) != PATHISE_OK) break;
    }
    if (st == PATHISE_OK) st = pathise_config_validate(cfg);
    if (st == PATHISE_OK) st = show_hash ? pathise_config_hash(cfg, print_line, nullptr)
                                         : pathise_config_dump(cfg, print_raw, nullptr);
    pathise_config_free(cfg);
    return st == PATHISE_OK ? 0 : fail(st);
  }

  pathise_store* store = nullptr;
  pathise_status st = pathise_store_load(kg.c_str(), &store);
  if (st != PATHISE_OK) return fail(st);
  if (reach->parsed()) {
    std::vector<const char*> rels;
    for (const auto& r : relations) rels.push_back(r.c_str());
    st = pathise_store_reachable(store, start.c_str(), rels.data(), rels.size(), print_line, nullptr);
  } else {
    st = pathise_store_paths(store, start.c_str(), max_hop, print_line, nullptr);
  }
  pathise_store_free(store);
  return st == PATHISE_OK ? 0 : fail(st);
}
