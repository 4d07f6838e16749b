#pragma once

// Experiment configuration: a flat "section.key = value" text format with a
// fixed key set, canonical serialization (stable order, full precision), and
// two built-in presets. Parsing starts from the desk preset so a partial file
// overrides only what it names; unknown or duplicate keys are errors.

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/model.hpp"

namespace fteasd {

struct ExperimentConfig {
  // audio
  long long sample_rate = 16000;
  double clip_seconds = 2.048;
  long long window = 256;
  long long hop = 256;
  long long spectrum_bins = 2048;
  // chunking
  long long n_chunks = 4;
  double overlap = 0.5;
  // model
  long long ftc_stem_channels = 8;
  std::array<long long, 4> ftc_block_channels{16, 32, 32, 32};
  long long excitation_stem_channels = 4;
  std::array<long long, 4> excitation_stage_channels{8, 16, 32, 64};
  std::array<long long, 3> spectrum_channels{8, 16, 32};
  std::array<long long, 3> spectrum_kernels{11, 7, 5};
  std::array<long long, 3> spectrum_strides{4, 4, 4};
  std::array<long long, 5> spectrum_dense{256, 128, 128, 128, 128};
  long long gram_embed_dim = 128;
  // training
  long long epochs = 15;
  long long batch_size = 16;
  double learning_rate = 0.001;
  double mixup_alpha = 0.2;
  long long n_subclusters = 4;
  std::uint64_t seed = 20250817;
  // scoring
  long long source_centers = 16;
  long long target_prototypes = 10;

  // ---- derived geometry ----
  long long clip_samples() const {
    return static_cast<long long>(std::llround(clip_seconds * static_cast<double>(sample_rate)));
  }
  long long freq_bins() const { return window / 2 + 1; }
  long long time_frames() const { return (clip_samples() - window) / hop + 1; }

  void validate() const {
    if (sample_rate <= 0) throw argument_error("config: audio.sample_rate must be positive");
    if (clip_seconds <= 0.0) throw argument_error("config: audio.clip_seconds must be positive");
    if (window < 2) throw argument_error("config: audio.window must be at least 2");
    if (hop < 1) throw argument_error("config: audio.hop must be positive");
    if (clip_samples() < window)
      throw argument_error("config: clip shorter than the analysis window");
    long long one_sided = clip_samples() / 2 + 1;
    if (spectrum_bins < 1 || spectrum_bins > one_sided)
      throw argument_error("config: audio.spectrum_bins must be in [1, " +
                           std::to_string(one_sided) + "]");
    if (n_chunks < 1) throw argument_error("config: chunking.n_chunks must be at least 1");
    if (!(overlap >= 0.0 && overlap < 1.0))
      throw argument_error("config: chunking.overlap must lie in [0, 1)");
    for (long long v : {ftc_stem_channels, excitation_stem_channels, gram_embed_dim})
      if (v < 1) throw argument_error("config: model channel counts must be positive");
    for (long long v : ftc_block_channels)
      if (v < 1) throw argument_error("config: model.ftc_block_channels must be positive");
    for (long long v : excitation_stage_channels)
      if (v < 1) throw argument_error("config: model.excitation_stage_channels must be positive");
    for (std::size_t i = 0; i < 3; ++i) {
      if (spectrum_channels[i] < 1 || spectrum_kernels[i] < 1 || spectrum_strides[i] < 1)
        throw argument_error("config: spectrum conv geometry must be positive");
    }
    for (long long v : spectrum_dense)
      if (v < 1) throw argument_error("config: model.spectrum_dense must be positive");
    if (epochs < 0) throw argument_error("config: training.epochs must be non-negative");
    if (batch_size < 1) throw argument_error("config: training.batch_size must be positive");
    if (learning_rate <= 0.0) throw argument_error("config: training.learning_rate must be positive");
    if (mixup_alpha < 0.0) throw argument_error("config: training.mixup_alpha must be non-negative");
    if (n_subclusters < 1) throw argument_error("config: training.n_subclusters must be positive");
    if (source_centers < 1) throw argument_error("config: scoring.source_centers must be positive");
    if (target_prototypes < 1)
      throw argument_error("config: scoring.target_prototypes must be positive");
  }

  // Model geometry for the active experiment; switches are chosen per run.
  ModelConfig model_config(AblationSwitches switches = {}) const {
    ModelConfig m;
    m.freq_bins = freq_bins();
    m.time_frames = time_frames();
    m.spectrum_bins = spectrum_bins;
    m.ftc.n_chunks = n_chunks;
    m.ftc.overlap = overlap;
    m.ftc.module.stem_channels = ftc_stem_channels;
    m.ftc.module.block_channels = ftc_block_channels;
    m.excitation.stem_channels = excitation_stem_channels;
    m.excitation.stage_channels = excitation_stage_channels;
    m.spectrum.channels = spectrum_channels;
    m.spectrum.kernels = spectrum_kernels;
    m.spectrum.strides = spectrum_strides;
    m.spectrum.dense = spectrum_dense;
    m.gram_embed_dim = gram_embed_dim;
    m.switches = switches;
    return m;
  }

  // ---- presets ----

  // "desk": the default above — small enough to train on a workstation core.
  // "full": published-scale geometry (18 s clips, 1024-point window, wide
  // channel counts).
  static ExperimentConfig preset(const std::string& name) {
    if (name == "desk") return ExperimentConfig{};
    if (name == "full") {
      ExperimentConfig c;
      c.clip_seconds = 18.0;
      c.window = 1024;
      c.hop = 512;
      c.spectrum_bins = 8192;
      c.ftc_stem_channels = 32;
      c.ftc_block_channels = {64, 128, 128, 128};
      c.excitation_stem_channels = 16;
      c.excitation_stage_channels = {32, 64, 128, 256};
      c.spectrum_channels = {32, 64, 128};
      c.spectrum_dense = {512, 256, 256, 128, 128};
      c.epochs = 100;
      c.n_subclusters = 16;
      return c;
    }
    throw argument_error("unknown preset '" + name + "' (expected desk|full)");
  }

  // ---- key/value access ----

  void apply(const std::string& key, const std::string& value) {
    auto ll = [&](long long& field) { field = parse_ll(key, value); };
    auto dd = [&](double& field) { field = parse_dd(key, value); };
    if (key == "audio.sample_rate") ll(sample_rate);
    else if (key == "audio.clip_seconds") dd(clip_seconds);
    else if (key == "audio.window") ll(window);
    else if (key == "audio.hop") ll(hop);
    else if (key == "audio.spectrum_bins") ll(spectrum_bins);
    else if (key == "chunking.n_chunks") ll(n_chunks);
    else if (key == "chunking.overlap") dd(overlap);
    else if (key == "model.ftc_stem_channels") ll(ftc_stem_channels);
    else if (key == "model.ftc_block_channels") parse_list(key, value, ftc_block_channels);
    else if (key == "model.excitation_stem_channels") ll(excitation_stem_channels);
    else if (key == "model.excitation_stage_channels")
      parse_list(key, value, excitation_stage_channels);
    else if (key == "model.spectrum_channels") parse_list(key, value, spectrum_channels);
    else if (key == "model.spectrum_kernels") parse_list(key, value, spectrum_kernels);
    else if (key == "model.spectrum_strides") parse_list(key, value, spectrum_strides);
    else if (key == "model.spectrum_dense") parse_list(key, value, spectrum_dense);
    else if (key == "model.gram_embed_dim") ll(gram_embed_dim);
    else if (key == "training.epochs") ll(epochs);
    else if (key == "training.batch_size") ll(batch_size);
    else if (key == "training.learning_rate") dd(learning_rate);
    else if (key == "training.mixup_alpha") dd(mixup_alpha);
    else if (key == "training.n_subclusters") ll(n_subclusters);
    else if (key == "training.seed") seed = static_cast<std::uint64_t>(parse_ll(key, value));
    else if (key == "scoring.source_centers") ll(source_centers);
    else if (key == "scoring.target_prototypes") ll(target_prototypes);
    else throw argument_error("config: unknown key '" + key + "'");
  }

  std::string serialize() const {
    std::ostringstream out;
    auto put = [&](const char* key, const std::string& v) { out << key << " = " << v << "\n"; };
    put("audio.sample_rate", std::to_string(sample_rate));
    put("audio.clip_seconds", fmt_double(clip_seconds));
    put("audio.window", std::to_string(window));
    put("audio.hop", std::to_string(hop));
    put("audio.spectrum_bins", std::to_string(spectrum_bins));
    put("chunking.n_chunks", std::to_string(n_chunks));
    put("chunking.overlap", fmt_double(overlap));
    put("model.ftc_stem_channels", std::to_string(ftc_stem_channels));
    put("model.ftc_block_channels", join(ftc_block_channels));
    put("model.excitation_stem_channels", std::to_string(excitation_stem_channels));
    put("model.excitation_stage_channels", join(excitation_stage_channels));
    put("model.spectrum_channels", join(spectrum_channels));
    put("model.spectrum_kernels", join(spectrum_kernels));
    put("model.spectrum_strides", join(spectrum_strides));
    put("model.spectrum_dense", join(spectrum_dense));
    put("model.gram_embed_dim", std::to_string(gram_embed_dim));
    put("training.epochs", std::to_string(epochs));
    put("training.batch_size", std::to_string(batch_size));
    put("training.learning_rate", fmt_double(learning_rate));
    put("training.mixup_alpha", fmt_double(mixup_alpha));
    put("training.n_subclusters", std::to_string(n_subclusters));
    put("training.seed", std::to_string(seed));
    put("scoring.source_centers", std::to_string(source_centers));
    put("scoring.target_prototypes", std::to_string(target_prototypes));
    return out.str();
  }

  // Parses config text onto this object. Lines are "key = value"; blank lines
  // and lines starting with '#' are skipped; keys may appear at most once.
  void apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> seen;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw argument_error("config line " + std::to_string(line_no) + ": expected key = value");
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      for (const std::string& s : seen)
        if (s == key)
          throw argument_error("config line " + std::to_string(line_no) + ": duplicate key '" +
                               key + "'");
      seen.push_back(key);
      apply(key, value);
    }
  }

  static ExperimentConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    ExperimentConfig cfg;
    cfg.apply_text(buf.str());
    cfg.validate();
    return cfg;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
  }

  static long long parse_ll(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      long long out = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw argument_error("config: '" + key + "' needs an integer, got '" + v + "'");
    }
  }

  static double parse_dd(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw argument_error("config: '" + key + "' needs a number, got '" + v + "'");
    }
  }

  template <std::size_t N>
  static void parse_list(const std::string& key, const std::string& v,
                         std::array<long long, N>& out) {
    std::stringstream ss(v);
    std::string item;
    std::size_t i = 0;
    while (std::getline(ss, item, ',')) {
      if (i >= N)
        throw argument_error("config: '" + key + "' needs exactly " + std::to_string(N) +
                             " comma-separated integers");
      out[i++] = parse_ll(key, trim(item));
    }
    if (i != N)
      throw argument_error("config: '" + key + "' needs exactly " + std::to_string(N) +
                           " comma-separated integers");
  }

  template <std::size_t N>
  static std::string join(const std::array<long long, N>& a) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) {
      if (i) s += ',';
      s += std::to_string(a[i]);
    }
    return s;
  }
};

}  // namespace fteasd
