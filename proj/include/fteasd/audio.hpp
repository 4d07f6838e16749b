#pragma once

// Waveform handling: WAV I/O, dataset manifest parsing, clip conditioning,
// and the two model inputs (framed magnitude spectrogram, utterance-level
// magnitude spectrum).

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fteasd/common.hpp"
#include "fteasd/fft.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

enum class Domain { source, target };
enum class Split { train, test };
enum class Label { normal, anomalous, unknown };

inline std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline std::string to_string(Label l) {
  switch (l) {
    case Label::normal: return "normal";
    case Label::anomalous: return "anomalous";
    default: return "unknown";
  }
}

inline Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw argument_error("unknown domain '" + s + "' (expected source|target)");
}
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw argument_error("unknown split '" + s + "' (expected train|test)");
}
inline Label parse_label(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "anomalous") return Label::anomalous;
  if (s == "unknown") return Label::unknown;
  throw argument_error("unknown label '" + s + "' (expected normal|anomalous|unknown)");
}

struct AudioClip {
  std::vector<double> samples;  // mono, nominally within [-1, 1]
  int sample_rate = 16000;
  std::string machine_type;
  std::string attribute;
  Domain domain = Domain::source;
  Split split = Split::train;
  Label label = Label::unknown;

  void validate() const {
    if (samples.empty()) throw argument_error("audio clip has no samples");
    if (sample_rate <= 0) throw argument_error("audio clip sample rate must be positive");
    if (split == Split::train && label != Label::normal)
      throw argument_error("train-split clips must be labeled normal (" + machine_type + ")");
  }
};

// ---------------------------------------------------------------------------
// WAV I/O (mono PCM16 or IEEE float32)
// ---------------------------------------------------------------------------

namespace detail {
inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}
inline void write_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}
}  // namespace detail

struct WavData {
  std::vector<double> samples;
  int sample_rate = 0;
};

inline WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open WAV file: " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw io_error("not a RIFF file: " + path);
  detail::read_u32(in);  // total size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw io_error("not a WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  WavData out;
  while (in.read(tag, 4)) {
    std::uint32_t size = detail::read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = detail::read_u16(in);
      channels = detail::read_u16(in);
      rate = detail::read_u32(in);
      detail::read_u32(in);  // byte rate
      detail::read_u16(in);  // block align
      bits = detail::read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw io_error("WAV data chunk before fmt chunk: " + path);
      if (channels != 1) throw io_error("only mono WAV supported: " + path);
      if (format == 1 && bits == 16) {
        std::size_t n = size / 2;
        out.samples.resize(n);
        std::vector<char> raw(size);
        in.read(raw.data(), size);
        for (std::size_t i = 0; i < n; ++i) {
          std::int16_t v = static_cast<std::int16_t>(
              static_cast<unsigned char>(raw[2 * i]) |
              (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
          out.samples[i] = static_cast<double>(v) / 32768.0;
        }
      } else if (format == 3 && bits == 32) {
        std::size_t n = size / 4;
        out.samples.resize(n);
        std::vector<char> raw(size);
        in.read(raw.data(), size);
        for (std::size_t i = 0; i < n; ++i) {
          float f;
          std::memcpy(&f, raw.data() + 4 * i, 4);
          out.samples[i] = static_cast<double>(f);
        }
      } else {
        throw io_error("unsupported WAV encoding (need PCM16 or float32): " + path);
      }
      out.sample_rate = static_cast<int>(rate);
      return out;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);  // chunks are word-aligned
    }
  }
  throw io_error("WAV file has no data chunk: " + path);
}

inline void write_wav_pcm16(const std::string& path, const std::vector<double>& samples,
                            int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write WAV file: " + path);
  std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  detail::write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::write_u32(out, 16);
  detail::write_u16(out, 1);  // PCM
  detail::write_u16(out, 1);  // mono
  detail::write_u32(out, static_cast<std::uint32_t>(sample_rate));
  detail::write_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  detail::write_u16(out, 2);
  detail::write_u16(out, 16);
  out.write("data", 4);
  detail::write_u32(out, data_size);
  for (double s : samples) {
    long v = std::lrint(s * 32768.0);
    v = std::min(32767L, std::max(-32767L, v));
    detail::write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  if (!out) throw io_error("failed while writing WAV file: " + path);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestRow {
  std::string path;  // resolved (absolute or relative to the manifest file)
  std::string machine_type;
  std::string attribute;
  Domain domain;
  Split split;
  Label label;
};

inline const char* kManifestHeader = "path,machine_type,attribute,domain,split,label";

// Loads the dataset manifest. Relative clip paths are resolved against the
// manifest file's directory.
inline std::vector<ManifestRow> load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw io_error("cannot open manifest: " + manifest_path);
  std::string line;
  if (!std::getline(in, line)) throw io_error("empty manifest: " + manifest_path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw io_error("manifest header mismatch, expected '" + std::string(kManifestHeader) +
                   "', got '" + line + "'");
  std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  std::vector<ManifestRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw io_error("manifest line " + std::to_string(line_no) + " has " +
                     std::to_string(fields.size()) + " fields, expected 6");
    ManifestRow row;
    std::filesystem::path p(fields[0]);
    row.path = p.is_absolute() ? p.string() : (base / p).string();
    row.machine_type = fields[1];
    row.attribute = fields[2];
    row.domain = parse_domain(fields[3]);
    row.split = parse_split(fields[4]);
    row.label = parse_label(fields[5]);
    if (row.split == Split::train && row.label != Label::normal)
      throw io_error("manifest line " + std::to_string(line_no) +
                     ": train rows must be labeled normal");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error("manifest has no data rows: " + manifest_path);
  return rows;
}

inline AudioClip load_clip(const ManifestRow& row) {
  WavData wav = read_wav(row.path);
  AudioClip clip;
  clip.samples = std::move(wav.samples);
  clip.sample_rate = wav.sample_rate;
  clip.machine_type = row.machine_type;
  clip.attribute = row.attribute;
  clip.domain = row.domain;
  clip.split = row.split;
  clip.label = row.label;
  clip.validate();
  return clip;
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

// Tiles the waveform end-to-end and truncates so the clip has exactly
// target_samples samples. Idempotent for already-conditioned clips.
inline std::vector<double> condition_samples(const std::vector<double>& samples,
                                             long long target_samples) {
  if (samples.empty()) throw argument_error("condition: clip has no samples");
  if (target_samples <= 0) throw argument_error("condition: target length must be positive");
  std::vector<double> out(static_cast<std::size_t>(target_samples));
  std::size_t n = samples.size();
  for (long long i = 0; i < target_samples; ++i)
    out[static_cast<std::size_t>(i)] = samples[static_cast<std::size_t>(i) % n];
  return out;
}

inline AudioClip condition_clip(const AudioClip& clip, double target_seconds) {
  clip.validate();
  long long target = static_cast<long long>(std::llround(target_seconds * clip.sample_rate));
  AudioClip out = clip;
  out.samples = condition_samples(clip.samples, target);
  return out;
}

// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n)));
  return w;
}

// Framed magnitude spectrogram: no centering or end padding, frames at
// {0, hop, ...}, T = floor((len-window)/hop)+1, Hann-windowed, one-sided DFT
// magnitudes, F = window/2 + 1. Linear scale throughout. Returns [F, T].
inline Tensor stft_magnitude(const std::vector<double>& samples, long long window, long long hop) {
  if (window < 2) throw argument_error("stft: window must be at least 2");
  if (hop < 1) throw argument_error("stft: hop must be positive");
  long long len = static_cast<long long>(samples.size());
  if (len < window)
    throw argument_error("stft: clip length " + std::to_string(len) + " shorter than window " +
                         std::to_string(window));
  long long T = (len - window) / hop + 1;
  long long F = window / 2 + 1;
  std::vector<double> win = hann_window(static_cast<std::size_t>(window));
  std::vector<double> mag(static_cast<std::size_t>(F * T));
  parallel_for(T, [&](long long lo, long long hi) {
    std::vector<std::complex<double>> frame(static_cast<std::size_t>(window));
    for (long long t = lo; t < hi; ++t) {
      const double* src = samples.data() + t * hop;
      for (long long i = 0; i < window; ++i)
        frame[static_cast<std::size_t>(i)] = {src[i] * win[static_cast<std::size_t>(i)], 0.0};
      fft(frame);
      for (long long f = 0; f < F; ++f)
        mag[static_cast<std::size_t>(f * T + t)] = std::abs(frame[static_cast<std::size_t>(f)]);
    }
  });
  return make_leaf({F, T}, std::move(mag));
}

// One-sided magnitude DFT of the whole conditioned signal (length must equal
// expected_len), mean-pooled into `bins` groups by equal index partition.
inline Tensor utterance_spectrum(const std::vector<double>& samples, long long expected_len,
                                 long long bins) {
  if (static_cast<long long>(samples.size()) != expected_len)
    throw argument_error("utterance_spectrum: clip length " + std::to_string(samples.size()) +
                         " is not the conditioned length " + std::to_string(expected_len));
  std::vector<double> raw = real_magnitude_spectrum(samples);
  long long fu = static_cast<long long>(raw.size());
  if (bins < 1 || bins > fu)
    throw argument_error("utterance_spectrum: bins must be in [1, " + std::to_string(fu) + "]");
  std::vector<double> pooled(static_cast<std::size_t>(bins));
  for (long long i = 0; i < bins; ++i) {
    long long lo = i * fu / bins;
    long long hi = (i + 1) * fu / bins;
    double acc = 0.0;
    for (long long j = lo; j < hi; ++j) acc += raw[static_cast<std::size_t>(j)];
    pooled[static_cast<std::size_t>(i)] = acc / static_cast<double>(hi - lo);
  }
  return make_leaf({bins}, std::move(pooled));
}

}  // namespace fteasd
