#pragma once

// Chunkwise frequency/time encoder: a spectrogram is split into overlapping
// chunks along one axis, the chunks are stacked as input channels, and a
// shared-architecture (but independently parameterized) conv module embeds
// each stack. Two pathways run side by side, one chunked along frequency and
// one along time.

#include <array>
#include <string>
#include <vector>

#include "fteasd/chunking.hpp"
#include "fteasd/common.hpp"
#include "fteasd/layers.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

struct ConvModuleConfig {
  long long stem_channels = 32;
  std::array<long long, 4> block_channels{64, 128, 128, 128};
};

// 7x7/2 stem conv (+BN+ReLU), 3x3/2 max pool, four stride-2 residual blocks,
// then global max pooling down to a vector of the last block's width.
struct ConvModule {
  Conv2dLayer stem;
  BatchNorm2dLayer stem_bn;
  std::vector<ResNetBlock> blocks;
  long long out_dim = 0;

  ConvModule() = default;
  ConvModule(ParamRegistry& reg, std::uint64_t seed, const std::string& name, long long in_ch,
             const ConvModuleConfig& cfg) {
    stem = Conv2dLayer(reg, seed, name + ".stem", in_ch, cfg.stem_channels, 7, 7, 2, 3);
    stem_bn = BatchNorm2dLayer(reg, name + ".stem_bn", cfg.stem_channels);
    long long ch = cfg.stem_channels;
    for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
      blocks.emplace_back(reg, seed, name + ".block" + std::to_string(i + 1), ch,
                          cfg.block_channels[i], 2);
      ch = cfg.block_channels[i];
    }
    out_dim = ch;
  }

  // x: [B, in_ch, H, W] -> [B, out_dim]
  Tensor forward(const Tensor& x, bool training) const {
    Tensor h = relu(stem_bn.forward(stem.forward(x), training));
    h = maxpool2d(h, 3, 3, 2, 2);
    for (const ResNetBlock& b : blocks) h = b.forward(h, training);
    return global_max_pool(h);
  }

  // Spatial extents after the stem conv, pool, and the four blocks; used to
  // size inputs and to check that no stage collapses below 1.
  static std::vector<std::pair<long long, long long>> trace(long long H, long long W) {
    std::vector<std::pair<long long, long long>> t;
    H = conv_out_dim(H, 7, 2, 3);
    W = conv_out_dim(W, 7, 2, 3);
    t.emplace_back(H, W);
    H = conv_out_dim(H, 3, 2, 0);
    W = conv_out_dim(W, 3, 2, 0);
    t.emplace_back(H, W);
    for (int i = 0; i < 4; ++i) {
      H = conv_out_dim(H, 3, 2, 1);
      W = conv_out_dim(W, 3, 2, 1);
      t.emplace_back(H, W);
    }
    return t;
  }
};

struct FtcEncoderConfig {
  long long n_chunks = 4;
  double overlap = 0.5;
  ConvModuleConfig module;
};

// Two independent conv modules over the frequency-chunked and time-chunked
// stacks of the same spectrogram.
struct FtcEncoder {
  ConvModule freq_path, time_path;
  ChunkSpec freq_spec, time_spec;
  long long out_dim = 0;  // per pathway

  FtcEncoder() = default;
  FtcEncoder(ParamRegistry& reg, std::uint64_t seed, const std::string& name,
             const FtcEncoderConfig& cfg) {
    freq_spec = ChunkSpec{cfg.n_chunks, cfg.overlap, Axis::frequency};
    time_spec = ChunkSpec{cfg.n_chunks, cfg.overlap, Axis::time};
    freq_path = ConvModule(reg, seed, name + ".freq", cfg.n_chunks, cfg.module);
    time_path = ConvModule(reg, seed, name + ".time", cfg.n_chunks, cfg.module);
    out_dim = freq_path.out_dim;
  }

  // freq_stack: [B, N, c_f, T]; time_stack: [B, N, F, c_t].
  Tensor forward_freq(const Tensor& freq_stack, bool training) const {
    return freq_path.forward(freq_stack, training);
  }
  Tensor forward_time(const Tensor& time_stack, bool training) const {
    return time_path.forward(time_stack, training);
  }
};

}  // namespace fteasd
