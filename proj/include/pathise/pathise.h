/* C interface to the pathise library. All functions are thread-safe except
 * where a handle is shared between threads while being modified. Strings
 * returned through callbacks are valid only during the callback. */
#ifndef PATHISE_H
#define PATHISE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(PATHISE_BUILDING)
#define PATHISE_API __attribute__((visibility("default")))
#else
#define PATHISE_API
#endif

typedef enum pathise_status {
  PATHISE_OK = 0,
  PATHISE_ERR_VALIDATION = 1,
  PATHISE_ERR_NOT_FOUND = 2,
  PATHISE_ERR_FORMAT = 3,
  PATHISE_ERR_RUNTIME = 4,
  PATHISE_ERR_NETWORK = 5,
  PATHISE_ERR_ARGUMENT = 6
} pathise_status;

typedef struct pathise_config pathise_config;
typedef struct pathise_store pathise_store;

typedef void (*pathise_string_fn)(const char* text, void* user);

/* Message of the last failed call on this thread; "" if none. */
PATHISE_API const char* pathise_last_error(void);
PATHISE_API const char* pathise_version(void);

/* ---- configuration ---- */
PATHISE_API pathise_status pathise_config_new(pathise_config** out);
PATHISE_API pathise_status pathise_config_load(const char* path, pathise_config** out);
PATHISE_API void pathise_config_free(pathise_config* config);
PATHISE_API pathise_status pathise_config_set(pathise_config* config, const char* key, const char* value);
/* "key=value" */
PATHISE_API pathise_status pathise_config_override(pathise_config* config, const char* assignment);
PATHISE_API pathise_status pathise_config_get(const pathise_config* config, const char* key, pathise_string_fn fn,
                                              void* user);
PATHISE_API pathise_status pathise_config_validate(const pathise_config* config);
PATHISE_API pathise_status pathise_config_hash(const pathise_config* config, pathise_string_fn fn, void* user);
/* Effective configuration as key = value lines. */
PATHISE_API pathise_status pathise_config_dump(const pathise_config* config, pathise_string_fn fn, void* user);
/* Calls fn(key, default, help) for every documented key. */
PATHISE_API void pathise_config_schema(void (*fn)(const char* key, const char* default_value, const char* help,
                                                  void* user),
                                       void* user);

/* ---- stages ---- */
PATHISE_API size_t pathise_stage_count(void);
PATHISE_API const char* pathise_stage_name(size_t index);
/* Returns the process exit code: 0 success, 1 validation, 2 runtime.
 * Progress and errors go to `log` (may be NULL). */
PATHISE_API int pathise_run_stage(const pathise_config* config, const char* stage, int force, pathise_string_fn log,
                                  void* user);

/* ---- knowledge graph ---- */
/* Loads tab-separated triples, or a snapshot written by the ingest stage. */
PATHISE_API pathise_status pathise_store_load(const char* path, pathise_store** out);
PATHISE_API void pathise_store_free(pathise_store* store);
PATHISE_API pathise_status pathise_store_stats(const pathise_store* store, size_t* entities, size_t* relations,
                                               size_t* triples);
/* Entities reached from `start` by following `relations` (count entries). */
PATHISE_API pathise_status pathise_store_reachable(const pathise_store* store, const char* start,
                                                   const char* const* relations, size_t count, pathise_string_fn fn,
                                                   void* user);
/* Every relation path of length <= max_hop from `start`, relations joined by " -> ". */
PATHISE_API pathise_status pathise_store_paths(const pathise_store* store, const char* start, size_t max_hop,
                                               pathise_string_fn fn, void* user);

/* ---- metrics ---- */
PATHISE_API pathise_status pathise_answer_metrics(const char* const* predicted, size_t predicted_count,
                                                  const char* const* gold, size_t gold_count, double* f1, int* hit,
                                                  int* hits_at_1);

#ifdef __cplusplus
}
#endif

#endif /* PATHISE_H */
