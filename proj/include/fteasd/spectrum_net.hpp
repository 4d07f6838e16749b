#pragma once

// Utterance-spectrum branch: three strided 1-D convolutions (realized as
// height-1 2-D convs) with batch norm and ReLU, flattened into a stack of
// five dense layers. No activation after the last dense layer.

#include <array>
#include <string>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/layers.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

struct SpectrumNetConfig {
  std::array<long long, 3> channels{32, 64, 128};
  std::array<long long, 3> kernels{11, 7, 5};
  std::array<long long, 3> strides{4, 4, 4};
  std::array<long long, 5> dense{512, 256, 256, 128, 128};
};

struct SpectrumNet {
  std::vector<Conv2dLayer> convs;
  std::vector<BatchNorm2dLayer> bns;
  std::vector<DenseLayer> denses;
  long long in_bins = 0;
  long long flat_dim = 0;
  long long out_dim = 0;

  SpectrumNet() = default;
  SpectrumNet(ParamRegistry& reg, std::uint64_t seed, const std::string& name, long long bins,
              const SpectrumNetConfig& cfg)
      : in_bins(bins) {
    long long ch = 1;
    long long len = bins;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      long long k = cfg.kernels[i];
      long long pad = k / 2;
      std::string conv_name = name + ".conv" + std::to_string(i + 1);
      Conv2dLayer conv(reg, seed, conv_name, ch, cfg.channels[i], 1, k, 1, 0);
      conv.sw = cfg.strides[i];
      conv.pw = pad;
      convs.push_back(std::move(conv));
      bns.emplace_back(reg, conv_name + ".bn", cfg.channels[i]);
      len = conv_out_dim(len, k, cfg.strides[i], pad);
      ch = cfg.channels[i];
    }
    flat_dim = ch * len;
    long long d = flat_dim;
    for (std::size_t i = 0; i < cfg.dense.size(); ++i) {
      denses.emplace_back(reg, seed, name + ".dense" + std::to_string(i + 1), d, cfg.dense[i]);
      d = cfg.dense[i];
    }
    out_dim = d;
  }

  // x: [B, bins] -> [B, out_dim]
  Tensor forward(const Tensor& x, bool training) const {
    if (x->shape.size() != 2 || x->shape[1] != in_bins)
      throw shape_error("spectrum branch: expected [B," + std::to_string(in_bins) + "], got " +
                        shape_str(x->shape));
    long long B = x->shape[0];
    Tensor h = reshape(x, {B, 1, 1, in_bins});
    for (std::size_t i = 0; i < convs.size(); ++i)
      h = relu(bns[i].forward(convs[i].forward(h), training));
    h = reshape(h, {B, flat_dim});
    for (std::size_t i = 0; i < denses.size(); ++i) {
      h = denses[i].forward(h);
      if (i + 1 < denses.size()) h = relu(h);
    }
    return h;
  }
};

}  // namespace fteasd
