#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pathise/estimator.hpp"
#include "pathise/generator.hpp"
#include "pathise/reasoner.hpp"
#include "pathise/supervision.hpp"

namespace pathise {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

/// Documented key set with defaults, in file order.
std::span<const ConfigKey> config_schema();

/// Key-value pipeline configuration. Files hold `key = value` lines; `#`
/// starts a comment. Relative paths resolve against the config file's
/// directory. Every key is checked against the schema.
class PipelineConfig {
 public:
  PipelineConfig();  // schema defaults

  static PipelineConfig load(const std::filesystem::path& file);
  static PipelineConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});

  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void set_override(const std::string& assignment);
  const std::string& get(const std::string& key) const;

  std::string get_string(const std::string& key) const { return get(key); }
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::filesystem::path get_path(const std::string& key) const;  // empty when unset

  /// Typed check of every value; throws validation errors.
  void validate() const;
  /// 16 hex digits over all keys except output_dir and predictions_file.
  std::string hash() const;
  std::string dump() const;

  std::uint64_t stage_seed(const std::string& stage) const;

  EstimatorConfig estimator_config(std::size_t input_dim) const;
  NegativeSamplingConfig sampling_config() const;
  GeneratorConfig generator_config(std::vector<std::string> relation_labels, std::size_t input_dim) const;
  HttpChatConfig chat_config() const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

/// Stage names in pipeline order; "pipeline" last.
std::span<const char* const> stage_names();

struct StageOptions {
  bool force = false;  // accept artifacts written under a different config hash
  std::function<void(const std::string&)> log;
};

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Runs one stage (or the whole chain for "pipeline"). Returns an exit code;
/// errors are reported through options.log.
int run_stage(const std::string& name, const PipelineConfig& config, const StageOptions& options = {});

/// Artifact header: first line of every stage output, a JSON object with the
/// producing stage, artifact version and config hash.
inline constexpr int kArtifactVersion = 1;

/// Writes `content` to `path` through a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace pathise
