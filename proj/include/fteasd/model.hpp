#pragma once

// Full dual-path model: chunkwise frequency/time encoder and excitation
// network over the spectrogram, a dense head fusing their outputs into a
// spectrogram embedding, and the utterance-spectrum branch concatenated
// alongside it. Either spectrogram module (or both) can be switched off for
// ablations; with both off only the spectrum branch remains.

#include <string>
#include <vector>

#include "fteasd/chunking.hpp"
#include "fteasd/common.hpp"
#include "fteasd/excitation.hpp"
#include "fteasd/ftc_encoder.hpp"
#include "fteasd/layers.hpp"
#include "fteasd/spectrum_net.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

struct AblationSwitches {
  bool use_ftc = true;
  bool use_excitation = true;
  SEMask mask;  // excitation gate families; ignored when use_excitation is off

  std::string tag() const {
    if (use_ftc && use_excitation) return "full-" + mask.tag();
    if (use_ftc) return "no_excitation";
    if (use_excitation) return "no_ftc-" + mask.tag();
    return "spectrum_only";
  }
};

struct ModelConfig {
  long long freq_bins = 129;    // spectrogram F
  long long time_frames = 128;  // spectrogram T
  long long spectrum_bins = 2048;
  FtcEncoderConfig ftc;
  ExcitationNetConfig excitation;
  SpectrumNetConfig spectrum;
  long long gram_embed_dim = 128;
  AblationSwitches switches;
};

// Model inputs for one batch. Members for disabled modules stay null.
struct FeatureBatch {
  Tensor freq_stack;  // [B, N, c_f, T]
  Tensor time_stack;  // [B, N, F, c_t]
  Tensor raw_gram;    // [B, 1, F, T]
  Tensor spectrum;    // [B, P]

  long long batch_size() const {
    if (spectrum) return spectrum->shape[0];
    throw state_error("feature batch has no spectrum input");
  }
};

// Per-clip inputs before batching.
struct ClipFeatures {
  Tensor gram;      // [F, T]
  Tensor spectrum;  // [P]
};

struct FteNet {
  ParamRegistry reg;
  ModelConfig cfg;
  FtcEncoder ftc;
  ExcitationNet excitation;
  SpectrumNet spectrum;
  DenseLayer gram_head;
  long long embed_dim = 0;

  explicit FteNet(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    const AblationSwitches& sw = cfg.switches;
    if (sw.use_ftc) {
      ChunkSpec fs{cfg.ftc.n_chunks, cfg.ftc.overlap, Axis::frequency};
      ChunkSpec ts{cfg.ftc.n_chunks, cfg.ftc.overlap, Axis::time};
      check_geometry("frequency pathway", fs.plan(cfg.freq_bins).chunk_extent, cfg.time_frames);
      check_geometry("time pathway", cfg.freq_bins, ts.plan(cfg.time_frames).chunk_extent);
      ftc = FtcEncoder(reg, seed, "ftc", cfg.ftc);
    }
    if (sw.use_excitation) {
      check_geometry("excitation input", cfg.freq_bins, cfg.time_frames);
      excitation = ExcitationNet(reg, seed, "excitation", cfg.freq_bins, cfg.time_frames,
                                 cfg.excitation, sw.mask);
    }
    spectrum = SpectrumNet(reg, seed, "spectrum", cfg.spectrum_bins, cfg.spectrum);
    long long gram_in = 0;
    if (sw.use_ftc) gram_in += 2 * ftc.out_dim;
    if (sw.use_excitation) gram_in += excitation.out_dim;
    if (gram_in > 0) {
      gram_head = DenseLayer(reg, seed, "gram_head", gram_in, cfg.gram_embed_dim);
      embed_dim = cfg.gram_embed_dim + spectrum.out_dim;
    } else {
      embed_dim = spectrum.out_dim;
    }
  }

  FteNet(const FteNet&) = delete;
  FteNet& operator=(const FteNet&) = delete;

  // Chunk, stack, and batch per-clip features according to the active
  // switches. All clips must share the configured spectrogram/spectrum shape.
  FeatureBatch batch_features(const std::vector<ClipFeatures>& clips) const {
    if (clips.empty()) throw argument_error("batch_features: empty batch");
    std::vector<long long> gram_shape{cfg.freq_bins, cfg.time_frames};
    for (const ClipFeatures& c : clips) {
      if (!c.gram || c.gram->shape != gram_shape)
        throw shape_error("batch_features: spectrogram must be " + shape_str(gram_shape) +
                          ", got " + (c.gram ? shape_str(c.gram->shape) : std::string("null")));
      if (!c.spectrum || c.spectrum->shape != std::vector<long long>{cfg.spectrum_bins})
        throw shape_error("batch_features: spectrum must have " +
                          std::to_string(cfg.spectrum_bins) + " bins");
    }
    FeatureBatch out;
    const AblationSwitches& sw = cfg.switches;
    if (sw.use_ftc) {
      ChunkSpec fs{cfg.ftc.n_chunks, cfg.ftc.overlap, Axis::frequency};
      ChunkSpec ts{cfg.ftc.n_chunks, cfg.ftc.overlap, Axis::time};
      std::vector<Tensor> fstacks, tstacks;
      fstacks.reserve(clips.size());
      tstacks.reserve(clips.size());
      for (const ClipFeatures& c : clips) {
        fstacks.push_back(chunk_axis(c.gram, fs));
        tstacks.push_back(chunk_axis(c.gram, ts));
      }
      out.freq_stack = stack_chunked(fstacks);
      out.time_stack = stack_chunked(tstacks);
    }
    if (sw.use_excitation) {
      std::vector<Tensor> raw;
      raw.reserve(clips.size());
      for (const ClipFeatures& c : clips)
        raw.push_back(reshape(c.gram, {1, cfg.freq_bins, cfg.time_frames}));
      out.raw_gram = stack_chunked(raw);
    }
    std::vector<Tensor> rows;
    rows.reserve(clips.size());
    for (const ClipFeatures& c : clips) rows.push_back(c.spectrum);
    out.spectrum = stack_rows(rows);
    return out;
  }

  // -> [B, embed_dim]
  Tensor forward(const FeatureBatch& batch, bool training, CaptureMap* sink = nullptr) const {
    const AblationSwitches& sw = cfg.switches;
    if (!batch.spectrum) throw argument_error("forward: missing spectrum input");
    std::vector<Tensor> gram_parts;
    if (sw.use_ftc) {
      if (!batch.freq_stack || !batch.time_stack)
        throw argument_error("forward: missing chunk stacks for the frequency/time encoder");
      Tensor zf = ftc.forward_freq(batch.freq_stack, training);
      Tensor zt = ftc.forward_time(batch.time_stack, training);
      capture(sink, "z_freq", zf);
      capture(sink, "z_time", zt);
      gram_parts.push_back(zf);
      gram_parts.push_back(zt);
    }
    if (sw.use_excitation) {
      if (!batch.raw_gram)
        throw argument_error("forward: missing raw spectrogram for the excitation network");
      Tensor zs = excitation.forward(batch.raw_gram, training, sink);
      capture(sink, "z_excitation", zs);
      gram_parts.push_back(zs);
    }
    Tensor ztr = spectrum.forward(batch.spectrum, training);
    capture(sink, "z_spectrum", ztr);
    Tensor emb;
    if (!gram_parts.empty()) {
      Tensor cat = gram_parts[0];
      for (std::size_t i = 1; i < gram_parts.size(); ++i) cat = concat_cols(cat, gram_parts[i]);
      Tensor zg = gram_head.forward(cat);
      capture(sink, "z_gram", zg);
      emb = concat_cols(zg, ztr);
    } else {
      emb = ztr;
    }
    capture(sink, "embedding", emb);
    return emb;
  }

 private:
  static void check_geometry(const std::string& where, long long H, long long W) {
    try {
      ConvModule::trace(H, W);
    } catch (const error& e) {
      throw argument_error(where + ": input too small for the conv stack (" + e.what() + ")");
    }
  }
};

}  // namespace fteasd
