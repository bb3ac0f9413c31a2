#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace pathise {

using Matrix = Eigen::MatrixXd;

/// Ordered collection of named trainable tensors.
class ParamSet {
 public:
  /// Returns the index of the new tensor. Names must be unique.
  std::size_t add(std::string name, Matrix value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  std::size_t find(const std::string& name) const;  // throws when absent

  /// Zero tensors with the same shapes, for gradient accumulation.
  std::vector<Matrix> zeros_like() const;
  std::size_t scalar_count() const;
  bool all_finite() const;

  friend bool operator==(const ParamSet&, const ParamSet&);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Matrix init_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, std::mt19937_64& rng);

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight-decay Adam.
class AdamW {
 public:
  AdamW(const ParamSet& params, AdamWConfig config);
  void step(ParamSet& params, const std::vector<Matrix>& grads);
  long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

/// Self-describing checkpoint: magic "PISECKPT", format version, model kind,
/// a JSON config echo and the named tensors.
struct Checkpoint {
  std::string kind;
  std::string config_json;
  ParamSet params;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind);

/// seed' = mix(seed, label). Used to fan one global seed out to stages and questions.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace pathise
