#pragma once

// Trainable building blocks: a registry owning named parameters and running
// buffers, deterministic per-parameter initialization, and the layer types
// the networks are assembled from (conv, batch norm, dense, residual block,
// and the three-way excitation module).

#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

// Optional activation capture used by the feature-map dump tool: layers write
// named intermediate tensors into it when a non-null map is passed through
// forward().
using CaptureMap = std::map<std::string, Tensor>;

inline void capture(CaptureMap* sink, const std::string& name, const Tensor& t) {
  if (sink) (*sink)[name] = t;
}

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

class ParamRegistry {
 public:
  Tensor add_param(const std::string& name, std::vector<long long> shape,
                   std::vector<double> values) {
    claim(name);
    Tensor t = make_leaf(std::move(shape), std::move(values), /*requires_grad=*/true);
    params_.emplace_back(name, t);
    return t;
  }

  std::shared_ptr<std::vector<double>> add_buffer(const std::string& name, std::size_t size,
                                                  double fill) {
    claim(name);
    auto buf = std::make_shared<std::vector<double>>(size, fill);
    buffers_.emplace_back(name, buf);
    return buf;
  }

  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  const std::vector<std::pair<std::string, std::shared_ptr<std::vector<double>>>>& buffers()
      const {
    return buffers_;
  }

  Tensor param(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return t;
    throw argument_error("no parameter named '" + name + "'");
  }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [n, t] : params_) out.push_back(t);
    return out;
  }

  long long total_param_count() const {
    long long n = 0;
    for (const auto& [name, t] : params_) n += t->numel();
    return n;
  }

 private:
  void claim(const std::string& name) {
    if (!names_.insert(name).second)
      throw state_error("duplicate registry entry '" + name + "'");
  }

  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, std::shared_ptr<std::vector<double>>>> buffers_;
  std::unordered_set<std::string> names_;
};

// ---------------------------------------------------------------------------
// Initializers (seeded per parameter name so layouts can change without
// perturbing unrelated parameters)
// ---------------------------------------------------------------------------

namespace detail {
inline Rng param_rng(std::uint64_t seed, const std::string& name) {
  return Rng(mix_seed(seed, fnv1a(name)));
}
}  // namespace detail

inline std::vector<double> he_normal_init(std::uint64_t seed, const std::string& name,
                                          long long count, long long fan_in) {
  Rng rng = detail::param_rng(seed, name);
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = rng.normal() * stddev;
  return v;
}

// Square matrix initialized near the identity so an excitation gate starts as
// a mild, input-dependent perturbation instead of random mixing.
inline std::vector<double> identity_noise_init(std::uint64_t seed, const std::string& name,
                                               long long n, double sigma = 0.05) {
  Rng rng = detail::param_rng(seed, name);
  std::vector<double> v(static_cast<std::size_t>(n * n));
  for (long long i = 0; i < n; ++i)
    for (long long j = 0; j < n; ++j)
      v[static_cast<std::size_t>(i * n + j)] = (i == j ? 1.0 : 0.0) + rng.normal() * sigma;
  return v;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Conv2dLayer {
  Tensor w, b;
  long long sh = 1, sw = 1, ph = 0, pw = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry& reg, std::uint64_t seed, const std::string& name, long long in_ch,
              long long out_ch, long long kh, long long kw, long long stride, long long pad)
      : sh(stride), sw(stride), ph(pad), pw(pad) {
    long long fan_in = in_ch * kh * kw;
    w = reg.add_param(name + ".w", {out_ch, in_ch, kh, kw},
                      he_normal_init(seed, name + ".w", out_ch * in_ch * kh * kw, fan_in));
    b = reg.add_param(name + ".b", {out_ch},
                      std::vector<double>(static_cast<std::size_t>(out_ch), 0.0));
  }

  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, sh, sw, ph, pw); }
};

struct BatchNorm2dLayer {
  Tensor gamma, beta;
  std::shared_ptr<std::vector<double>> running_mean, running_var;

  BatchNorm2dLayer() = default;
  BatchNorm2dLayer(ParamRegistry& reg, const std::string& name, long long channels) {
    gamma = reg.add_param(name + ".gamma", {channels},
                          std::vector<double>(static_cast<std::size_t>(channels), 1.0));
    beta = reg.add_param(name + ".beta", {channels},
                         std::vector<double>(static_cast<std::size_t>(channels), 0.0));
    running_mean = reg.add_buffer(name + ".running_mean", static_cast<std::size_t>(channels), 0.0);
    running_var = reg.add_buffer(name + ".running_var", static_cast<std::size_t>(channels), 1.0);
  }

  Tensor forward(const Tensor& x, bool training) const {
    return batch_norm2d(x, gamma, beta, running_mean.get(), running_var.get(), training);
  }
};

struct DenseLayer {
  Tensor w, b;

  DenseLayer() = default;
  DenseLayer(ParamRegistry& reg, std::uint64_t seed, const std::string& name, long long in_dim,
             long long out_dim) {
    w = reg.add_param(name + ".w", {in_dim, out_dim},
                      he_normal_init(seed, name + ".w", in_dim * out_dim, in_dim));
    b = reg.add_param(name + ".b", {out_dim},
                      std::vector<double>(static_cast<std::size_t>(out_dim), 0.0));
  }

  Tensor forward(const Tensor& x) const { return affine(x, w, b); }
};

// Two 3x3 convolutions with batch norm, plus a projected shortcut whenever
// the channel count or resolution changes; ReLU after the residual add.
struct ResNetBlock {
  Conv2dLayer conv1, conv2, proj;
  BatchNorm2dLayer bn1, bn2, bn_proj;
  bool has_proj = false;

  ResNetBlock() = default;
  ResNetBlock(ParamRegistry& reg, std::uint64_t seed, const std::string& name, long long in_ch,
              long long out_ch, long long stride) {
    conv1 = Conv2dLayer(reg, seed, name + ".conv1", in_ch, out_ch, 3, 3, stride, 1);
    bn1 = BatchNorm2dLayer(reg, name + ".bn1", out_ch);
    conv2 = Conv2dLayer(reg, seed, name + ".conv2", out_ch, out_ch, 3, 3, 1, 1);
    bn2 = BatchNorm2dLayer(reg, name + ".bn2", out_ch);
    has_proj = (stride != 1 || in_ch != out_ch);
    if (has_proj) {
      proj = Conv2dLayer(reg, seed, name + ".proj", in_ch, out_ch, 1, 1, stride, 0);
      bn_proj = BatchNorm2dLayer(reg, name + ".bn_proj", out_ch);
    }
  }

  Tensor forward(const Tensor& x, bool training) const {
    Tensor h = relu(bn1.forward(conv1.forward(x), training));
    h = bn2.forward(conv2.forward(h), training);
    Tensor shortcut = has_proj ? bn_proj.forward(proj.forward(x), training) : x;
    return relu(add(h, shortcut));
  }
};

// Which excitation families are active. Disabled families contribute nothing
// (and allocate no parameters).
struct SEMask {
  bool channel = true;
  bool frequency = true;
  bool time = true;

  bool any() const { return channel || frequency || time; }
  std::string tag() const {
    std::string s;
    if (channel) s += 'c';
    if (frequency) s += 'f';
    if (time) s += 't';
    return s.empty() ? "none" : s;
  }
};

// Three-way excitation: per-axis mean pooling produces channel / frequency /
// time descriptors, each gated through its own square dense layer + sigmoid,
// and the input is rescaled by (1 + sum of active gates).
struct ModifiedSE {
  DenseLayer gate_c, gate_f, gate_t;
  SEMask mask;
  std::string name;

  ModifiedSE() = default;
  ModifiedSE(ParamRegistry& reg, std::uint64_t seed, const std::string& name_, long long channels,
             long long freq, long long time, SEMask mask_)
      : mask(mask_), name(name_) {
    auto square_gate = [&](const std::string& gate_name, long long n) {
      DenseLayer d;
      d.w = reg.add_param(gate_name + ".w", {n, n}, identity_noise_init(seed, gate_name + ".w", n));
      d.b = reg.add_param(gate_name + ".b", {n},
                          std::vector<double>(static_cast<std::size_t>(n), 0.0));
      return d;
    };
    if (mask.channel) gate_c = square_gate(name + ".channel", channels);
    if (mask.frequency) gate_f = square_gate(name + ".frequency", freq);
    if (mask.time) gate_t = square_gate(name + ".time", time);
  }

  Tensor forward(const Tensor& x, CaptureMap* sink = nullptr) const {
    Tensor wc, wf, wt;
    if (mask.channel) wc = sigmoid(gate_c.forward(axis_mean_pool(x, Axis::channel)));
    if (mask.frequency) wf = sigmoid(gate_f.forward(axis_mean_pool(x, Axis::frequency)));
    if (mask.time) wt = sigmoid(gate_t.forward(axis_mean_pool(x, Axis::time)));
    Tensor y = mask.any() ? excited_aggregate(x, wc, wf, wt) : x;
    if (sink) {
      capture(sink, name + ".in", x);
      if (wc) capture(sink, name + ".gate_channel", wc);
      if (wf) capture(sink, name + ".gate_frequency", wf);
      if (wt) capture(sink, name + ".gate_time", wt);
      capture(sink, name + ".out", y);
    }
    return y;
  }
};

}  // namespace fteasd
