#pragma once

// A deliberately tiny model geometry used wherever a full forward/backward
// pass must be cheap (finite-difference checks, training smoke tests).

#include "fteasd/model.hpp"

namespace testsupport {

inline fteasd::ModelConfig toy_model_config() {
  fteasd::ModelConfig cfg;
  cfg.freq_bins = 17;
  cfg.time_frames = 16;
  cfg.spectrum_bins = 64;
  cfg.ftc.n_chunks = 2;
  cfg.ftc.overlap = 0.5;
  cfg.ftc.module.stem_channels = 2;
  cfg.ftc.module.block_channels = {2, 3, 3, 3};
  cfg.excitation.stem_channels = 2;
  cfg.excitation.stage_channels = {2, 3, 3, 4};
  cfg.spectrum.channels = {2, 3, 4};
  cfg.spectrum.kernels = {11, 7, 5};
  cfg.spectrum.strides = {4, 4, 4};
  cfg.spectrum.dense = {8, 8, 8, 6, 6};
  cfg.gram_embed_dim = 6;
  return cfg;
}

// Random per-clip inputs matching the toy geometry. Magnitudes stay positive
// like real spectral features.
inline std::vector<fteasd::ClipFeatures> toy_clip_features(fteasd::Rng& rng, int count,
                                                           const fteasd::ModelConfig& cfg) {
  std::vector<fteasd::ClipFeatures> clips;
  for (int i = 0; i < count; ++i) {
    long long gn = cfg.freq_bins * cfg.time_frames;
    std::vector<double> gram(static_cast<std::size_t>(gn));
    for (auto& v : gram) v = rng.uniform(0.0, 1.0);
    std::vector<double> spec(static_cast<std::size_t>(cfg.spectrum_bins));
    for (auto& v : spec) v = rng.uniform(0.0, 1.0);
    fteasd::ClipFeatures c;
    c.gram = fteasd::make_leaf({cfg.freq_bins, cfg.time_frames}, std::move(gram));
    c.spectrum = fteasd::make_leaf({cfg.spectrum_bins}, std::move(spec));
    clips.push_back(std::move(c));
  }
  return clips;
}

}  // namespace testsupport
