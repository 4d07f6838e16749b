#pragma once

// Excitation network over the raw (unchunked) spectrogram: a conv backbone
// interleaved with seven three-way excitation gates, each sized for the
// channel/frequency/time extents at its placement.

#include <array>
#include <string>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/layers.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

struct ExcitationNetConfig {
  long long stem_channels = 16;
  std::array<long long, 4> stage_channels{32, 64, 128, 256};
};

struct ExcitationNet {
  struct Stage {
    ResNetBlock down;  // stride 2, widens channels
    ModifiedSE se;
    ResNetBlock keep;  // stride 1
  };

  ModifiedSE se_input;
  Conv2dLayer stem;
  BatchNorm2dLayer stem_bn;
  ModifiedSE se_a, se_b;
  ResNetBlock block_a, block_b;  // stem width, stride 1
  std::vector<Stage> stages;
  long long out_dim = 0;
  std::string name;

  ExcitationNet() = default;
  ExcitationNet(ParamRegistry& reg, std::uint64_t seed, const std::string& name_, long long F,
                long long T, const ExcitationNetConfig& cfg, SEMask mask)
      : name(name_) {
    se_input = ModifiedSE(reg, seed, name + ".se_input", 1, F, T, mask);
    stem = Conv2dLayer(reg, seed, name + ".stem", 1, cfg.stem_channels, 7, 7, 2, 3);
    stem_bn = BatchNorm2dLayer(reg, name + ".stem_bn", cfg.stem_channels);
    long long h = conv_out_dim(F, 7, 2, 3);
    long long w = conv_out_dim(T, 7, 2, 3);
    h = conv_out_dim(h, 3, 2, 0);
    w = conv_out_dim(w, 3, 2, 0);
    se_a = ModifiedSE(reg, seed, name + ".se_a", cfg.stem_channels, h, w, mask);
    block_a = ResNetBlock(reg, seed, name + ".block_a", cfg.stem_channels, cfg.stem_channels, 1);
    se_b = ModifiedSE(reg, seed, name + ".se_b", cfg.stem_channels, h, w, mask);
    block_b = ResNetBlock(reg, seed, name + ".block_b", cfg.stem_channels, cfg.stem_channels, 1);
    long long ch = cfg.stem_channels;
    for (std::size_t i = 0; i < cfg.stage_channels.size(); ++i) {
      long long out_ch = cfg.stage_channels[i];
      std::string stage_name = name + ".stage" + std::to_string(i + 1);
      Stage s;
      s.down = ResNetBlock(reg, seed, stage_name + ".down", ch, out_ch, 2);
      h = conv_out_dim(h, 3, 2, 1);
      w = conv_out_dim(w, 3, 2, 1);
      s.se = ModifiedSE(reg, seed, stage_name + ".se", out_ch, h, w, mask);
      s.keep = ResNetBlock(reg, seed, stage_name + ".keep", out_ch, out_ch, 1);
      stages.push_back(std::move(s));
      ch = out_ch;
    }
    out_dim = ch;
  }

  // x: [B, 1, F, T] -> [B, out_dim]
  Tensor forward(const Tensor& x, bool training, CaptureMap* sink = nullptr) const {
    Tensor h = se_input.forward(x, sink);
    h = relu(stem_bn.forward(stem.forward(h), training));
    h = maxpool2d(h, 3, 3, 2, 2);
    h = se_a.forward(h, sink);
    h = block_a.forward(h, training);
    h = se_b.forward(h, sink);
    h = block_b.forward(h, training);
    int idx = 0;
    for (const Stage& s : stages) {
      h = s.down.forward(h, training);
      h = s.se.forward(h, sink);
      h = s.keep.forward(h, training);
      if (sink) capture(sink, name + ".stage" + std::to_string(++idx) + ".out", h);
    }
    return global_max_pool(h);
  }
};

}  // namespace fteasd
