#pragma once

// Adam optimizer over registry parameters: per-coordinate first/second moment
// estimates with bias correction. State is held per parameter in creation
// order; gradients are read from each tensor's persistent grad buffer.

#include <cmath>
#include <string>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw argument_error("adam: learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw argument_error("adam: beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw argument_error("adam: beta2 must lie in [0,1)");
    if (!(eps > 0.0)) throw argument_error("adam: eps must be positive");
  }
};

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {})
      : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
      if (!p || !p->requires_grad)
        throw argument_error("adam: every parameter must be a trainable leaf");
      m_.emplace_back(p->data.size(), 0.0);
      v_.emplace_back(p->data.size(), 0.0);
    }
  }

  long long steps() const { return t_; }

  void zero_grad() {
    for (const Tensor& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  }

  // One bias-corrected update from the accumulated gradients. Rejects
  // non-finite gradients (upstream numeric checks make these rare, but a
  // silent NaN write into the weights must never happen).
  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      TensorNode& p = *params_[i];
      if (p.grad.size() != p.data.size())
        throw state_error("adam: parameter gradient buffer has the wrong size");
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      for (std::size_t j = 0; j < p.data.size(); ++j) {
        double g = p.grad[j];
        if (!std::isfinite(g))
          throw numeric_error("adam: non-finite gradient at parameter " + std::to_string(i) +
                              " coordinate " + std::to_string(j));
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
        p.data[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

}  // namespace fteasd
