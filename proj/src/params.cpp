#include "pathise/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "pathise/types.hpp"

namespace pathise {

std::size_t ParamSet::add(std::string name, Matrix value) {
  for (const auto& n : names_) {
    if (n == name) throw validation_error("duplicate parameter name " + name);
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw not_found_error("no parameter named " + name);
}

std::vector<Matrix> ParamSet::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(values_.size());
  for (const Matrix& v : values_) out.push_back(Matrix::Zero(v.rows(), v.cols()));
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParamSet::all_finite() const {
  for (const Matrix& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.values_.size(); ++i) {
    const Matrix& x = a.values_[i];
    const Matrix& y = b.values_[i];
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    // Bitwise comparison; NaN payloads included.
    if (x.size() && std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0) {
      return false;
    }
  }
  return true;
}

Matrix init_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

AdamW::AdamW(const ParamSet& params, AdamWConfig config)
    : cfg_(config), m_(params.zeros_like()), v_(params.zeros_like()) {}

void AdamW::step(ParamSet& params, const std::vector<Matrix>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = params.value(i);
    const Matrix& g = grads[i];
    w *= 1.0 - cfg_.learning_rate * cfg_.weight_decay;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    w.array() -= cfg_.learning_rate * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

namespace {
constexpr std::string_view kCheckpointMagic = "PISECKPT";
}

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  io::write_magic(out, kCheckpointMagic, kCheckpointFormatVersion);
  io::write_string(out, ckpt.kind);
  io::write_string(out, ckpt.config_json);
  io::write_pod<std::uint64_t>(out, ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const Matrix& m = ckpt.params.value(i);
    io::write_string(out, ckpt.params.name(i));
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    // Row-major on disk regardless of Eigen's storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) io::write_pod<double>(out, m(r, c));
    }
  }
}

Checkpoint load_checkpoint(std::istream& in) {
  auto version = io::read_magic(in, kCheckpointMagic, "checkpoint");
  if (version != kCheckpointFormatVersion) {
    throw format_error("checkpoint has format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointFormatVersion));
  }
  Checkpoint ckpt;
  ckpt.kind = io::read_string(in, "checkpoint kind");
  ckpt.config_json = io::read_string(in, "checkpoint config");
  auto n = io::read_pod<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = io::read_string(in, "tensor name");
    auto rows = io::read_pod<std::uint64_t>(in, "tensor shape");
    auto cols = io::read_pod<std::uint64_t>(in, "tensor shape");
    if (rows * cols > (1ull << 32)) throw format_error("implausible tensor shape for " + name);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = io::read_pod<double>(in, name);
    }
    ckpt.params.add(std::move(name), std::move(m));
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw not_found_error("cannot open checkpoint " + path.string());
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(in);
  } catch (const Error& e) {
    throw format_error(path.string() + ": " + e.what());
  }
  if (ckpt.kind != expected_kind) {
    throw format_error(path.string() + ": checkpoint holds a " + ckpt.kind + " model, expected " + expected_kind);
  }
  return ckpt;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

}  // namespace pathise
