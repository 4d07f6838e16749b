#pragma once

// Synthetic machine-sound corpus: each machine is a harmonic stack with 1/k
// amplitude rolloff, slow amplitude modulation, and additive noise. The
// target domain detunes the fundamental and raises the noise floor; four
// anomaly kinds perturb pitch, add a non-harmonic tone, change the modulation
// rate, or inject transient clicks. Generation is a pure function of the
// profile, counts, and seed, so regeneration is file-for-file identical.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fteasd/audio.hpp"
#include "fteasd/common.hpp"

namespace fteasd {

struct MachineProfile {
  std::string name;
  double fundamental_hz = 110.0;
  int n_harmonics = 6;
  double am_rate_hz = 3.0;
  double noise_level = 0.05;
  double target_shift = 1.06;              // multiplicative detune in the target domain
  std::vector<double> attributes = {1.0};  // per-attribute fundamental multipliers

  void validate() const {
    if (name.empty()) throw argument_error("machine profile: empty name");
    if (fundamental_hz <= 0.0) throw argument_error("machine profile: fundamental must be positive");
    if (n_harmonics < 1) throw argument_error("machine profile: need at least one harmonic");
    if (am_rate_hz <= 0.0) throw argument_error("machine profile: AM rate must be positive");
    if (noise_level < 0.0) throw argument_error("machine profile: noise level must be non-negative");
    if (target_shift <= 0.0) throw argument_error("machine profile: target shift must be positive");
    if (attributes.empty()) throw argument_error("machine profile: need at least one attribute");
    for (double a : attributes)
      if (a <= 0.0) throw argument_error("machine profile: attribute multipliers must be positive");
  }
};

struct AnomalySpec {
  enum class Kind { detune, extra_tone, am_rate_change, transient_clicks };
  Kind kind = Kind::detune;
  double magnitude = 1.2;

  void validate() const {
    if (!(magnitude > 0.0)) throw argument_error("anomaly spec: magnitude must be positive");
  }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::detune: return "detune";
      case Kind::extra_tone: return "extra_tone";
      case Kind::am_rate_change: return "am_rate_change";
      default: return "transient_clicks";
    }
  }
};

// Committed anomaly magnitudes for the shipped dataset: strong enough for a
// trained desk-scale model to separate, benign enough that an untrained
// embedding stays near chance level.
inline std::vector<AnomalySpec> default_anomalies() {
  return {
      {AnomalySpec::Kind::detune, 1.1},
      {AnomalySpec::Kind::extra_tone, 0.28},
      {AnomalySpec::Kind::am_rate_change, 8.0},
      {AnomalySpec::Kind::transient_clicks, 1.0},
  };
}

// Two desk-scale machines with distinct fundamentals, harmonics counts, and
// modulation rates; two attribute variants each.
inline std::vector<MachineProfile> desk_profiles() {
  MachineProfile fan;
  fan.name = "fanlike";
  fan.fundamental_hz = 110.0;
  fan.n_harmonics = 6;
  fan.am_rate_hz = 3.0;
  fan.noise_level = 0.15;
  fan.target_shift = 1.06;
  fan.attributes = {1.0, 1.22};

  MachineProfile pump;
  pump.name = "pumplike";
  pump.fundamental_hz = 170.0;
  pump.n_harmonics = 5;
  pump.am_rate_hz = 7.0;
  pump.noise_level = 0.15;
  pump.target_shift = 0.94;
  pump.attributes = {1.0, 1.18};

  return {fan, pump};
}

// One clip. The tonal skeleton (harmonic phases, AM phase) is a function of
// (profile, attribute, domain) only, so normal clips of one group differ just
// by their noise realization; clip_seed drives noise and anomaly randomness.
inline std::vector<double> generate_clip(const MachineProfile& profile,
                                         std::size_t attribute_index, Domain domain,
                                         const AnomalySpec* anomaly, std::uint64_t clip_seed,
                                         long long sample_rate, long long n_samples) {
  profile.validate();
  if (anomaly) anomaly->validate();
  if (attribute_index >= profile.attributes.size())
    throw argument_error("generate_clip: attribute index out of range for '" + profile.name + "'");
  if (sample_rate < 1 || n_samples < 1)
    throw argument_error("generate_clip: sample rate and length must be positive");

  double f0 = profile.fundamental_hz * profile.attributes[attribute_index];
  if (domain == Domain::target) f0 *= profile.target_shift;
  double am_rate = profile.am_rate_hz;
  double noise = profile.noise_level * (domain == Domain::target ? 1.5 : 1.0);
  double extra_tone_amp = 0.0;
  double click_amp = 0.0;
  if (anomaly) {
    switch (anomaly->kind) {
      case AnomalySpec::Kind::detune: f0 *= anomaly->magnitude; break;
      case AnomalySpec::Kind::extra_tone: extra_tone_amp = anomaly->magnitude; break;
      case AnomalySpec::Kind::am_rate_change: am_rate *= anomaly->magnitude; break;
      case AnomalySpec::Kind::transient_clicks: click_amp = anomaly->magnitude; break;
    }
  }
  double extra_tone_hz = f0 * (static_cast<double>(profile.n_harmonics) + 0.5);
  double top_hz = f0 * static_cast<double>(profile.n_harmonics);
  if (extra_tone_amp > 0.0) top_hz = std::max(top_hz, extra_tone_hz);
  if (top_hz >= 0.5 * static_cast<double>(sample_rate))
    throw argument_error("generate_clip: '" + profile.name + "' aliases (top partial " +
                         std::to_string(top_hz) + " Hz at " + std::to_string(sample_rate) +
                         " Hz sample rate)");

  // Deterministic per-group skeleton: harmonic and AM phases.
  std::string group = profile.name + "|" + std::to_string(attribute_index) + "|" +
                      to_string(domain);
  Rng skeleton(mix_seed(fnv1a(group), 0x5eedULL));
  std::vector<double> phase(static_cast<std::size_t>(profile.n_harmonics));
  for (auto& ph : phase) ph = skeleton.uniform(0.0, 2.0 * M_PI);
  double am_phase = skeleton.uniform(0.0, 2.0 * M_PI);

  // Amplitudes: 1/k rolloff scaled to a fixed total so machines stay at
  // comparable loudness regardless of harmonic count, with headroom left for
  // the noise floor in PCM16.
  double rolloff_sum = 0.0;
  for (int k = 1; k <= profile.n_harmonics; ++k) rolloff_sum += 1.0 / static_cast<double>(k);
  double gain = 0.35 / rolloff_sum;

  // The noise floor level itself varies clip to clip (recordings are never
  // captured at one fixed SNR); the scale draw happens first so the noise
  // stream is pinned regardless of anomaly kind.
  Rng rng(clip_seed);
  noise *= rng.uniform(0.8, 1.2);
  double extra_phase = extra_tone_amp > 0.0 ? rng.uniform(0.0, 2.0 * M_PI) : 0.0;

  std::vector<double> w(static_cast<std::size_t>(n_samples), 0.0);
  double dt = 1.0 / static_cast<double>(sample_rate);
  for (long long i = 0; i < n_samples; ++i) {
    double t = static_cast<double>(i) * dt;
    double tone = 0.0;
    for (int k = 1; k <= profile.n_harmonics; ++k)
      tone += gain / static_cast<double>(k) *
              std::sin(2.0 * M_PI * f0 * static_cast<double>(k) * t +
                       phase[static_cast<std::size_t>(k - 1)]);
    double am = 0.75 + 0.25 * std::sin(2.0 * M_PI * am_rate * t + am_phase);
    double s = am * tone;
    if (extra_tone_amp > 0.0)
      s += 0.5 * extra_tone_amp * std::sin(2.0 * M_PI * extra_tone_hz * t + extra_phase);
    if (noise > 0.0) s += noise * rng.normal();
    w[static_cast<std::size_t>(i)] = s;
  }

  if (click_amp > 0.0) {
    // Exponentially decaying impulses at random positions, at a fixed rate per
    // second so longer clips carry proportionally more of them.
    double seconds = static_cast<double>(n_samples) / static_cast<double>(sample_rate);
    int n_clicks = std::max(3, static_cast<int>(std::ceil(12.0 * seconds)));
    long long decay_len = std::max<long long>(8, sample_rate / 200);  // ~5 ms
    for (int c = 0; c < n_clicks; ++c) {
      long long pos = static_cast<long long>(rng.uniform_int(static_cast<std::uint64_t>(n_samples)));
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      for (long long j = 0; j < decay_len && pos + j < n_samples; ++j) {
        double env = std::exp(-3.0 * static_cast<double>(j) / static_cast<double>(decay_len));
        w[static_cast<std::size_t>(pos + j)] += sign * click_amp * env;
      }
    }
  }
  return w;
}

struct SynthCounts {
  int source_train = 99;
  int target_train = 10;
  int test = 40;  // half normal / half anomalous, domains alternating

  void validate() const {
    if (source_train < 1 || target_train < 0 || test < 0)
      throw argument_error("synth counts: need at least one source training clip");
    if (test % 2 != 0) throw argument_error("synth counts: test count must be even");
  }
};

// Writes rows as-is (paths are kept verbatim, so generators can emit paths
// relative to the manifest location).
inline void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write manifest: " + path);
  out << kManifestHeader << "\n";
  for (const ManifestRow& r : rows)
    out << r.path << ',' << r.machine_type << ',' << r.attribute << ',' << to_string(r.domain)
        << ',' << to_string(r.split) << ',' << to_string(r.label) << "\n";
  if (!out) throw io_error("failed while writing manifest: " + path);
}

// Generates the corpus under out_dir and returns the manifest path
// (out_dir/manifest.csv, clip paths relative to it). Per machine: source and
// target train splits are normal-only; the test split alternates domains and
// is half normal, half anomalous with anomaly kinds cycling through
// default_anomalies(). Every clip's seed derives from (seed, file name), so
// results do not depend on generation order.
inline std::string generate_dataset(const std::vector<MachineProfile>& profiles,
                                    const SynthCounts& counts, const std::string& out_dir,
                                    std::uint64_t seed, long long sample_rate,
                                    double clip_seconds) {
  if (profiles.empty()) throw argument_error("generate_dataset: no machine profiles");
  counts.validate();
  for (const MachineProfile& p : profiles) p.validate();
  long long n_samples =
      static_cast<long long>(std::llround(clip_seconds * static_cast<double>(sample_rate)));
  if (n_samples < 1) throw argument_error("generate_dataset: clip length must be positive");

  std::filesystem::path root(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw io_error("cannot create dataset directory " + root.string() + ": " + ec.message());

  std::vector<AnomalySpec> anomalies = default_anomalies();
  std::vector<ManifestRow> rows;

  auto emit = [&](const MachineProfile& profile, Domain domain, Split split, Label label,
                  const AnomalySpec* anomaly, int index) {
    std::size_t attr = static_cast<std::size_t>(index) % profile.attributes.size();
    std::string stem = profile.name + "_" + to_string(domain) + "_" + to_string(split) + "_" +
                       to_string(label);
    if (anomaly) stem += std::string("_") + AnomalySpec::kind_name(anomaly->kind);
    char idx[8];
    std::snprintf(idx, sizeof(idx), "%03d", index);
    std::string rel = profile.name + "/" + stem + "_" + idx + ".wav";

    std::vector<double> wave =
        generate_clip(profile, attr, domain, anomaly, mix_seed(seed, fnv1a(rel)), sample_rate,
                      n_samples);
    std::filesystem::path full = root / rel;
    std::filesystem::create_directories(full.parent_path(), ec);
    if (ec)
      throw io_error("cannot create directory " + full.parent_path().string() + ": " +
                     ec.message());
    write_wav_pcm16(full.string(), wave, static_cast<int>(sample_rate));

    ManifestRow row;
    row.path = rel;
    row.machine_type = profile.name;
    row.attribute = "v" + std::to_string(attr);
    row.domain = domain;
    row.split = split;
    row.label = label;
    rows.push_back(std::move(row));
  };

  for (const MachineProfile& profile : profiles) {
    for (int i = 0; i < counts.source_train; ++i)
      emit(profile, Domain::source, Split::train, Label::normal, nullptr, i);
    for (int i = 0; i < counts.target_train; ++i)
      emit(profile, Domain::target, Split::train, Label::normal, nullptr, i);
    int half = counts.test / 2;
    for (int i = 0; i < counts.test; ++i) {
      Domain domain = (i % 2 == 0) ? Domain::source : Domain::target;
      bool anomalous = i >= half;
      // Kinds advance every other clip so each kind lands in both domains.
      const AnomalySpec* spec =
          anomalous ? &anomalies[static_cast<std::size_t>((i - half) / 2) % anomalies.size()]
                    : nullptr;
      emit(profile, domain, Split::test, anomalous ? Label::anomalous : Label::normal, spec, i);
    }
  }

  std::string manifest = (root / "manifest.csv").string();
  write_manifest(manifest, rows);
  return manifest;
}

}  // namespace fteasd
