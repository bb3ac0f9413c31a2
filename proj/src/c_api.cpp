#include "pathise/pathise.h"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pathise/eval.hpp"
#include "pathise/kg_store.hpp"
#include "pathise/path_engine.hpp"
#include "pathise/pipeline.hpp"

struct pathise_config {
  pathise::PipelineConfig value;
};

struct pathise_store {
  pathise::TripleStore value;
};

namespace {

thread_local std::string last_error;

pathise_status status_for(const pathise::Error& e) {
  using K = pathise::Error::Kind;
  switch (e.kind()) {
    case K::kValidation: return PATHISE_ERR_VALIDATION;
    case K::kNotFound: return PATHISE_ERR_NOT_FOUND;
    case K::kFormat: return PATHISE_ERR_FORMAT;
    case K::kRuntime: return PATHISE_ERR_RUNTIME;
    case K::kNetwork: return PATHISE_ERR_NETWORK;
  }
  return PATHISE_ERR_RUNTIME;
}

template <typename F>
pathise_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return PATHISE_OK;
  } catch (const pathise::Error& e) {
    last_error = e.what();
    return status_for(e);
  } catch (const std::exception& e) {
    last_error = e.what();
    return PATHISE_ERR_RUNTIME;
  }
}

pathise_status bad_argument(const char* what) {
  last_error = what;
  return PATHISE_ERR_ARGUMENT;
}

}  // namespace

extern "C" {

const char* pathise_last_error(void) { return last_error.c_str(); }
const char* pathise_version(void) { return "0.1.0"; }

pathise_status pathise_config_new(pathise_config** out) {
  if (!out) return bad_argument("out is null");
  return guarded([&] { *out = new pathise_config{}; });
}

pathise_status pathise_config_load(const char* path, pathise_config** out) {
  if (!path || !out) return bad_argument("path and out must be non-null");
  return guarded([&] { *out = new pathise_config{pathise::PipelineConfig::load(path)}; });
}

void pathise_config_free(pathise_config* config) { delete config; }

pathise_status pathise_config_set(pathise_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return bad_argument("config, key and value must be non-null");
  return guarded([&] { config->value.set(key, value); });
}

pathise_status pathise_config_override(pathise_config* config, const char* assignment) {
  if (!config || !assignment) return bad_argument("config and assignment must be non-null");
  return guarded([&] { config->value.set_override(assignment); });
}

pathise_status pathise_config_get(const pathise_config* config, const char* key, pathise_string_fn fn, void* user) {
  if (!config || !key || !fn) return bad_argument("config, key and fn must be non-null");
  return guarded([&] { fn(config->value.get(key).c_str(), user); });
}

pathise_status pathise_config_validate(const pathise_config* config) {
  if (!config) return bad_argument("config is null");
  return guarded([&] { config->value.validate(); });
}

pathise_status pathise_config_hash(const pathise_config* config, pathise_string_fn fn, void* user) {
  if (!config || !fn) return bad_argument("config and fn must be non-null");
  return guarded([&] { fn(config->value.hash().c_str(), user); });
}

pathise_status pathise_config_dump(const pathise_config* config, pathise_string_fn fn, void* user) {
  if (!config || !fn) return bad_argument("config and fn must be non-null");
  return guarded([&] { fn(config->value.dump().c_str(), user); });
}

void pathise_config_schema(void (*fn)(const char*, const char*, const char*, void*), void* user) {
  if (!fn) return;
  for (const auto& k : pathise::config_schema()) fn(k.name, k.default_value, k.help, user);
}

size_t pathise_stage_count(void) { return pathise::stage_names().size(); }

const char* pathise_stage_name(size_t index) {
  auto names = pathise::stage_names();
  return index < names.size() ? names[index] : nullptr;
}

int pathise_run_stage(const pathise_config* config, const char* stage, int force, pathise_string_fn log, void* user) {
  if (!config || !stage) {
    bad_argument("config and stage must be non-null");
    return pathise::kExitValidation;
  }
  pathise::StageOptions options;
  options.force = force != 0;
  if (log) options.log = [&](const std::string& m) { log(m.c_str(), user); };
  try {
    return pathise::run_stage(stage, config->value, options);
  } catch (const std::exception& e) {
    last_error = e.what();
    return pathise::kExitRuntime;
  }
}

pathise_status pathise_store_load(const char* path, pathise_store** out) {
  if (!path || !out) return bad_argument("path and out must be non-null");
  return guarded([&] {
    char magic[8] = {};
    {
      std::ifstream probe(path, std::ios::binary);
      if (!probe) throw pathise::not_found_error(std::string("cannot open ") + path);
      probe.read(magic, sizeof magic);
    }
    if (std::memcmp(magic, "PISESTOR", 8) == 0) {
      *out = new pathise_store{pathise::load_snapshot(std::filesystem::path(path))};
      return;
    }
    // Snapshots written by the ingest stage carry a one-line artifact header.
    std::ifstream in(path, std::ios::binary);
    std::string first;
    std::getline(in, first);
    char next[8] = {};
    in.read(next, sizeof next);
    if (first.rfind("{\"artifact\"", 0) == 0 && std::memcmp(next, "PISESTOR", 8) == 0) {
      in.seekg(static_cast<std::streamoff>(first.size() + 1));
      *out = new pathise_store{pathise::load_snapshot(in)};
      return;
    }
    *out = new pathise_store{pathise::load_triples(std::filesystem::path(path))};
  });
}

void pathise_store_free(pathise_store* store) { delete store; }

pathise_status pathise_store_stats(const pathise_store* store, size_t* entities, size_t* relations, size_t* triples) {
  if (!store) return bad_argument("store is null");
  if (entities) *entities = store->value.entity_count();
  if (relations) *relations = store->value.relation_count();
  if (triples) *triples = store->value.triple_count();
  last_error.clear();
  return PATHISE_OK;
}

pathise_status pathise_store_reachable(const pathise_store* store, const char* start, const char* const* relations,
                                       size_t count, pathise_string_fn fn, void* user) {
  if (!store || !start || !fn || (count && !relations)) return bad_argument("null argument");
  return guarded([&] {
    const auto& kg = store->value;
    pathise::RelationPath path;
    for (size_t i = 0; i < count; ++i) path.relations.push_back(kg.relation(relations[i]));
    for (auto e : pathise::reachable_entities(kg, kg.entity(start), path)) fn(kg.entity_label(e).c_str(), user);
  });
}

pathise_status pathise_store_paths(const pathise_store* store, const char* start, size_t max_hop,
                                   pathise_string_fn fn, void* user) {
  if (!store || !start || !fn) return bad_argument("null argument");
  return guarded([&] {
    const auto& kg = store->value;
    std::vector<pathise::EntityId> starts{kg.entity(start)};
    auto result = pathise::enumerate_candidate_paths(kg, starts, {max_hop, 0});
    for (const auto& p : result.paths) fn(kg.path_to_string(p).c_str(), user);
  });
}

pathise_status pathise_answer_metrics(const char* const* predicted, size_t predicted_count, const char* const* gold,
                                      size_t gold_count, double* f1, int* hit, int* hits_at_1) {
  if ((predicted_count && !predicted) || (gold_count && !gold)) return bad_argument("null answer array");
  return guarded([&] {
    std::vector<std::string> p(predicted, predicted + predicted_count);
    std::vector<std::string> g(gold, gold + gold_count);
    if (f1) *f1 = pathise::f1_score(p, g);
    if (hit) *hit = pathise::hit(p, g);
    if (hits_at_1) *hits_at_1 = pathise::hits_at_1(p, g);
  });
}

}  // extern "C"
