#pragma once

// Named parameter store, Adam with warmup / inverse-sqrt decay and global
// gradient-norm clipping, and a little-endian binary checkpoint format.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoattn/tensor.hpp"

namespace monoattn {

class ParameterStore {
 public:
  Tensor create(const std::string& name, Shape shape, double init_scale,
                std::mt19937_64& rng) {
    if (params_.count(name))
      throw std::invalid_argument("duplicate parameter: " + name);
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    if (init_scale > 0.0) {
      std::normal_distribution<double> dist(0.0, init_scale);
      for (double& v : t.values()) v = dist(rng);
    }
    params_.emplace(name, t);
    return t;
  }

  Tensor create_const(const std::string& name, Shape shape, double fill) {
    if (params_.count(name))
      throw std::invalid_argument("duplicate parameter: " + name);
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    for (double& v : t.values()) v = fill;
    params_.emplace(name, t);
    return t;
  }

  Tensor get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
      throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  const std::map<std::string, Tensor>& all() const { return params_; }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& [k, t] : params_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [k, t] : params_) t.zero_grad();
  }

  double grad_norm() const {
    double sq = 0.0;
    for (const auto& [k, t] : params_)
      for (double g : t.grad()) sq += g * g;
    return std::sqrt(sq);
  }

  // Scales all gradients so the global norm is at most max_norm.
  // Returns the pre-clip norm.
  double clip_grad_norm(double max_norm) {
    double norm = grad_norm();
    if (norm > max_norm && norm > 0.0) {
      double s = max_norm / norm;
      for (auto& [k, t] : params_)
        for (double& g : t.node()->grad) g *= s;
    }
    return norm;
  }

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamConfig {
  double peak_lr = 1e-3;
  int warmup_steps = 400;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 5.0;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig cfg = {})
      : store_(store), cfg_(cfg) {}

  double lr_at(int64_t step) const {
    double s = static_cast<double>(std::max<int64_t>(step, 1));
    double w = static_cast<double>(std::max(cfg_.warmup_steps, 1));
    return cfg_.peak_lr * std::min(s / w, std::sqrt(w / s));
  }

  // Clips, then applies one Adam update. Returns the pre-clip grad norm.
  double step() {
    ++step_count_;
    double norm = store_.clip_grad_norm(cfg_.clip_norm);
    double lr = lr_at(step_count_);
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (const auto& [name, t] : store_.all()) {
      auto node = t.node();
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.size() != node->value.size()) {
        m.assign(node->value.size(), 0.0);
        v.assign(node->value.size(), 0.0);
      }
      for (size_t i = 0; i < node->value.size(); ++i) {
        double g = node->grad.size() == node->value.size() ? node->grad[i] : 0.0;
        if (cfg_.weight_decay > 0.0) g += cfg_.weight_decay * node->value[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        node->value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    return norm;
  }

  int64_t step_count() const { return step_count_; }

 private:
  ParameterStore& store_;
  AdamConfig cfg_;
  int64_t step_count_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: magic, version, entry count, then per entry
// name / shape / raw doubles. Fixed little-endian layout.

namespace ckpt {

constexpr uint32_t kMagic = 0x4b43414d;  // "MACK"
constexpr uint32_t kVersion = 1;

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f64(std::ostream& os, double d) {
  uint64_t v;
  static_assert(sizeof(v) == sizeof(d));
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace ckpt

inline void save_checkpoint(const ParameterStore& store,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  ckpt::write_u32(os, ckpt::kMagic);
  ckpt::write_u32(os, ckpt::kVersion);
  ckpt::write_u32(os, static_cast<uint32_t>(store.all().size()));
  for (const auto& [name, t] : store.all()) {
    ckpt::write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    ckpt::write_u32(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) ckpt::write_u32(os, static_cast<uint32_t>(d));
    for (double v : t.values()) ckpt::write_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

// Loads values into an existing store; names and shapes must match.
inline void load_checkpoint(ParameterStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  if (ckpt::read_u32(is) != ckpt::kMagic)
    throw std::runtime_error("bad checkpoint magic: " + path);
  uint32_t version = ckpt::read_u32(is);
  if (version != ckpt::kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  uint32_t count = ckpt::read_u32(is);
  if (count != store.all().size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = ckpt::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t ndim = ckpt::read_u32(is);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int>(ckpt::read_u32(is));
    Tensor t = store.get(name);
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    for (double& v : t.values()) v = ckpt::read_f64(is);
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
}

}  // namespace monoattn
