#pragma once

// Training pipeline: machine-type label map, wave-level mixup, conditioned
// training-set loading, the epoch loop (shuffle -> mixup -> features ->
// forward -> adaptive-scale loss -> Adam), and a binary checkpoint holding
// every parameter and buffer together with the experiment config, the
// ablation switches, and the label map.

#include <bit>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fteasd/audio.hpp"
#include "fteasd/common.hpp"
#include "fteasd/config.hpp"
#include "fteasd/loss.hpp"
#include "fteasd/model.hpp"
#include "fteasd/optimizer.hpp"
#include "fteasd/tensor.hpp"

namespace fteasd {

// ---------------------------------------------------------------------------
// Label map: machine type <-> class id
// ---------------------------------------------------------------------------

class LabelMap {
 public:
  // Distinct names, sorted, so ids are stable under input reordering.
  static LabelMap from_names(const std::vector<std::string>& names) {
    std::set<std::string> distinct(names.begin(), names.end());
    if (distinct.empty()) throw argument_error("label map: no names given");
    for (const std::string& n : distinct)
      if (n.empty()) throw argument_error("label map: empty machine-type name");
    LabelMap m;
    m.names_.assign(distinct.begin(), distinct.end());
    return m;
  }

  // Machine types of the given rows. Pass training rows only.
  static LabelMap from_rows(const std::vector<ManifestRow>& rows) {
    std::vector<std::string> names;
    names.reserve(rows.size());
    for (const ManifestRow& r : rows) names.push_back(r.machine_type);
    return from_names(names);
  }

  int id_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    throw argument_error("label map: unknown machine type '" + name + "'");
  }

  bool contains(const std::string& name) const {
    for (const std::string& n : names_)
      if (n == name) return true;
    return false;
  }

  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }

  // One machine type per line; the class id is the line index.
  std::string serialize() const {
    std::string out;
    for (const std::string& n : names_) {
      out += n;
      out += '\n';
    }
    return out;
  }

  static LabelMap parse(const std::string& text) {
    LabelMap m;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) throw io_error("label map: empty machine-type line");
      m.names_.push_back(line);
    }
    if (m.names_.empty()) throw io_error("label map: no entries");
    return m;
  }

 private:
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Wave-level mixup
// ---------------------------------------------------------------------------

struct MixupBatch {
  std::vector<std::vector<double>> waves;
  std::vector<double> soft_labels;  // row-major [n, n_classes]
};

// Blends each wave with a partner chosen by a random cyclic permutation (so
// nobody partners with themselves) using per-item lambda ~ Beta(alpha, alpha),
// and mixes the one-hot labels with the same weights. alpha <= 0 or a batch of
// one disables mixing. Draw order: the permutation first, then one lambda per
// item in batch order.
inline MixupBatch mixup_waves(const std::vector<std::vector<double>>& waves,
                              const std::vector<int>& class_ids, int n_classes, double alpha,
                              Rng& rng) {
  std::size_t n = waves.size();
  if (n == 0) throw argument_error("mixup: empty batch");
  if (class_ids.size() != n) throw argument_error("mixup: one class id per wave required");
  if (n_classes < 1) throw argument_error("mixup: need at least one class");
  std::size_t len = waves[0].size();
  for (const auto& w : waves)
    if (w.size() != len) throw argument_error("mixup: waves must share one length");
  for (int c : class_ids)
    if (c < 0 || c >= n_classes) throw argument_error("mixup: class id out of range");

  MixupBatch out;
  out.soft_labels.assign(n * static_cast<std::size_t>(n_classes), 0.0);
  if (alpha <= 0.0 || n < 2) {
    out.waves = waves;
    for (std::size_t i = 0; i < n; ++i)
      out.soft_labels[i * n_classes + static_cast<std::size_t>(class_ids[i])] = 1.0;
    return out;
  }

  std::vector<std::size_t> partner = rng.derangement(n);
  out.waves.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lam = rng.beta(alpha, alpha);
    const std::vector<double>& a = waves[i];
    const std::vector<double>& b = waves[partner[i]];
    std::vector<double>& m = out.waves[i];
    m.resize(len);
    for (std::size_t s = 0; s < len; ++s) m[s] = lam * a[s] + (1.0 - lam) * b[s];
    out.soft_labels[i * n_classes + static_cast<std::size_t>(class_ids[i])] += lam;
    out.soft_labels[i * n_classes + static_cast<std::size_t>(class_ids[partner[i]])] += 1.0 - lam;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

struct TrainSet {
  std::vector<std::vector<double>> waves;  // conditioned to cfg.clip_samples()
  std::vector<int> class_ids;
  std::vector<std::string> paths;
  LabelMap labels;
};

inline TrainSet load_train_set(const std::vector<ManifestRow>& rows,
                               const ExperimentConfig& cfg) {
  std::vector<ManifestRow> train;
  for (const ManifestRow& r : rows)
    if (r.split == Split::train) train.push_back(r);
  if (train.empty()) throw argument_error("training: manifest has no train-split rows");
  TrainSet set;
  set.labels = LabelMap::from_rows(train);
  long long target = cfg.clip_samples();
  for (const ManifestRow& r : train) {
    AudioClip clip = load_clip(r);
    set.waves.push_back(condition_samples(clip.samples, target));
    set.class_ids.push_back(set.labels.id_of(r.machine_type));
    set.paths.push_back(r.path);
  }
  return set;
}

// Spectrogram + utterance spectrum for one conditioned wave.
inline ClipFeatures features_from_wave(const std::vector<double>& wave,
                                       const ExperimentConfig& cfg) {
  if (static_cast<long long>(wave.size()) != cfg.clip_samples())
    throw argument_error("features: wave has " + std::to_string(wave.size()) +
                         " samples, expected " + std::to_string(cfg.clip_samples()));
  ClipFeatures f;
  f.gram = stft_magnitude(wave, cfg.window, cfg.hop);
  f.spectrum = utterance_spectrum(wave, cfg.clip_samples(), cfg.spectrum_bins);
  return f;
}

// Embeds conditioned waves in evaluation mode, cfg.batch_size clips at a time.
inline std::vector<std::vector<double>> embed_waves(const FteNet& model,
                                                    const ExperimentConfig& cfg,
                                                    const std::vector<std::vector<double>>& waves) {
  std::vector<std::vector<double>> out;
  out.reserve(waves.size());
  std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < waves.size(); start += bs) {
    std::size_t stop = std::min(waves.size(), start + bs);
    std::vector<ClipFeatures> feats;
    feats.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i)
      feats.push_back(features_from_wave(waves[i], cfg));
    Tensor emb = model.forward(model.batch_features(feats), /*training=*/false);
    long long d = emb->shape[1];
    for (std::size_t i = 0; i < stop - start; ++i) {
      const double* row = emb->data.data() + static_cast<long long>(i) * d;
      out.emplace_back(row, row + d);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct EpochStats {
  long long epoch = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, AblationSwitches switches, const LabelMap& labels)
      : cfg_(validated(cfg)),
        switches_(switches),
        labels_(labels),
        model_(cfg_.model_config(switches), cfg_.seed),
        head_(model_.reg, cfg_.seed, "head", labels.size(), static_cast<int>(cfg_.n_subclusters),
              model_.embed_dim),
        adam_(model_.reg.trainable(), adam_config(cfg_)),
        rng_(mix_seed(cfg_.seed, fnv1a("trainer"))) {}

  FteNet& model() { return model_; }
  const FteNet& model() const { return model_; }
  ClassHead& head() { return head_; }
  const ExperimentConfig& config() const { return cfg_; }
  const AblationSwitches& switches() const { return switches_; }
  const LabelMap& labels() const { return labels_; }

  // Runs cfg.epochs passes over the data. `log`, when given, receives one CSV
  // row per epoch: "epoch,loss,seconds" (loss is the clip-weighted epoch
  // mean). Any numeric failure aborts with the offending batch's clip paths.
  std::vector<EpochStats> fit(const TrainSet& data, std::ostream* log = nullptr) {
    check_data(data);
    if (log) *log << "epoch,loss,seconds\n" << std::flush;
    std::vector<EpochStats> stats;
    for (long long epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      auto t0 = std::chrono::steady_clock::now();
      double loss = run_epoch(data);
      double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      stats.push_back({epoch, loss, seconds});
      if (log)
        *log << epoch << ',' << fmt_double(loss) << ',' << fmt_double(seconds) << "\n"
             << std::flush;
    }
    return stats;
  }

 private:
  static ExperimentConfig validated(ExperimentConfig cfg) {
    cfg.validate();
    return cfg;
  }

  static AdamConfig adam_config(const ExperimentConfig& cfg) {
    AdamConfig ac;
    ac.lr = cfg.learning_rate;
    return ac;
  }

  void check_data(const TrainSet& data) const {
    if (data.waves.empty()) throw argument_error("training: empty train set");
    if (data.class_ids.size() != data.waves.size() || data.paths.size() != data.waves.size())
      throw argument_error("training: train-set columns disagree in length");
    for (int c : data.class_ids)
      if (c < 0 || c >= head_.n_classes())
        throw argument_error("training: class id outside the label map");
    for (const auto& w : data.waves)
      if (static_cast<long long>(w.size()) != cfg_.clip_samples())
        throw argument_error("training: waves must be conditioned to " +
                             std::to_string(cfg_.clip_samples()) + " samples");
  }

  double run_epoch(const TrainSet& data) {
    std::size_t n = data.waves.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng_.shuffle(order);

    double loss_sum = 0.0;
    long long clip_count = 0;
    std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t start = 0; start < n; start += bs) {
      std::size_t stop = std::min(n, start + bs);
      std::vector<std::vector<double>> waves;
      std::vector<int> ids;
      std::vector<std::string> paths;
      waves.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        waves.push_back(data.waves[order[i]]);
        ids.push_back(data.class_ids[order[i]]);
        paths.push_back(data.paths[order[i]]);
      }
      try {
        MixupBatch mixed =
            mixup_waves(waves, ids, head_.n_classes(), cfg_.mixup_alpha, rng_);
        std::vector<ClipFeatures> feats;
        feats.reserve(mixed.waves.size());
        for (const auto& w : mixed.waves) feats.push_back(features_from_wave(w, cfg_));
        FeatureBatch batch = model_.batch_features(feats);
        Tensor emb = model_.forward(batch, /*training=*/true);
        head_.update_scale(emb, mixed.soft_labels);
        Tensor loss = head_.loss(emb, mixed.soft_labels);
        adam_.zero_grad();
        backward(loss);
        adam_.step();
        head_.renormalize_centers();
        loss_sum += loss->data[0] * static_cast<double>(stop - start);
        clip_count += static_cast<long long>(stop - start);
      } catch (const numeric_error& e) {
        std::string joined;
        for (const std::string& p : paths) {
          if (!joined.empty()) joined += ", ";
          joined += p;
        }
        throw numeric_error(std::string(e.what()) + " [batch clips: " + joined + "]");
      }
    }
    return loss_sum / static_cast<double>(clip_count);
  }

  ExperimentConfig cfg_;
  AblationSwitches switches_;
  LabelMap labels_;
  FteNet model_;
  ClassHead head_;
  Adam adam_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------
//
// Binary layout (all integers little-endian):
//   byte[4]  magic "FTEA"
//   u32      version (currently 1)
//   string   experiment config text     (u64 byte count + bytes)
//   string   ablation switches text
//   string   label map text
//   u64      array count
//   per array: string name, u64 element count, f64[count] values
// Arrays cover every registry parameter and buffer (weights, running
// statistics, the adaptive logit scale).

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

inline void put_string(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw io_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string string() {
    std::uint64_t n = u64();
    need(static_cast<std::size_t>(n));
    std::string s = buf.substr(pos, static_cast<std::size_t>(n));
    pos += static_cast<std::size_t>(n);
    return s;
  }
};

}  // namespace detail

inline std::string serialize_switches(const AblationSwitches& sw) {
  return std::string("ftc=") + (sw.use_ftc ? "1" : "0") +
         " excitation=" + (sw.use_excitation ? "1" : "0") + " mask=" + sw.mask.tag();
}

inline AblationSwitches parse_switches(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  AblationSwitches sw;
  bool got_ftc = false, got_exc = false, got_mask = false;
  while (in >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw io_error("switches: expected key=value, got '" + tok + "'");
    std::string key = tok.substr(0, eq);
    std::string val = tok.substr(eq + 1);
    auto flag = [&](const char* what) {
      if (val == "1") return true;
      if (val == "0") return false;
      throw io_error(std::string("switches: ") + what + " must be 0 or 1");
    };
    if (key == "ftc") {
      sw.use_ftc = flag("ftc");
      got_ftc = true;
    } else if (key == "excitation") {
      sw.use_excitation = flag("excitation");
      got_exc = true;
    } else if (key == "mask") {
      sw.mask = SEMask{false, false, false};
      if (val != "none") {
        for (char c : val) {
          if (c == 'c' && !sw.mask.channel) sw.mask.channel = true;
          else if (c == 'f' && !sw.mask.frequency) sw.mask.frequency = true;
          else if (c == 't' && !sw.mask.time) sw.mask.time = true;
          else throw io_error("switches: bad mask '" + val + "'");
        }
      }
      got_mask = true;
    } else {
      throw io_error("switches: unknown key '" + key + "'");
    }
  }
  if (!got_ftc || !got_exc || !got_mask) throw io_error("switches: missing fields");
  return sw;
}

inline void save_checkpoint(const std::string& path, const ParamRegistry& reg,
                            const ExperimentConfig& cfg, const AblationSwitches& switches,
                            const LabelMap& labels) {
  std::string out;
  out += "FTEA";
  detail::put_u32(out, 1);
  detail::put_string(out, cfg.serialize());
  detail::put_string(out, serialize_switches(switches));
  detail::put_string(out, labels.serialize());
  detail::put_u64(out, reg.params().size() + reg.buffers().size());
  for (const auto& [name, t] : reg.params()) {
    detail::put_string(out, name);
    detail::put_u64(out, t->data.size());
    for (double d : t->data) detail::put_f64(out, d);
  }
  for (const auto& [name, buf] : reg.buffers()) {
    detail::put_string(out, name);
    detail::put_u64(out, buf->size());
    for (double d : *buf) detail::put_f64(out, d);
  }

  std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("checkpoint: cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw io_error("checkpoint: short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw io_error("checkpoint: cannot move " + tmp.string() + " into place: " + ec.message());
}

struct Checkpoint {
  ExperimentConfig config;
  AblationSwitches switches;
  LabelMap labels;
  std::map<std::string, std::vector<double>> arrays;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();
  detail::ByteReader r{buf};
  r.need(4);
  if (buf.compare(0, 4, "FTEA") != 0) throw io_error("checkpoint: bad magic in " + path);
  r.pos = 4;
  std::uint32_t version = r.u32();
  if (version != 1)
    throw io_error("checkpoint: unsupported version " + std::to_string(version) + " in " + path);

  Checkpoint ck;
  ck.config.apply_text(r.string());
  ck.config.validate();
  ck.switches = parse_switches(r.string());
  ck.labels = LabelMap::parse(r.string());
  std::uint64_t n_arrays = r.u64();
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    std::string name = r.string();
    std::uint64_t count = r.u64();
    r.need(static_cast<std::size_t>(count) * 8);
    std::vector<double> values(static_cast<std::size_t>(count));
    for (auto& v : values) v = r.f64();
    if (!ck.arrays.emplace(std::move(name), std::move(values)).second)
      throw io_error("checkpoint: duplicate array in " + path);
  }
  if (r.pos != buf.size()) throw io_error("checkpoint: trailing bytes in " + path);
  return ck;
}

// Copies checkpoint arrays into a freshly built registry. Strict in both
// directions: every registry entry must be present with the right size, and
// every stored array must be consumed.
inline void restore_registry(const ParamRegistry& reg,
                             const std::map<std::string, std::vector<double>>& arrays) {
  std::set<std::string> used;
  auto fetch = [&](const std::string& name, std::size_t size) -> const std::vector<double>& {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw io_error("checkpoint: missing array '" + name + "'");
    if (it->second.size() != size)
      throw io_error("checkpoint: array '" + name + "' has " + std::to_string(it->second.size()) +
                     " values, expected " + std::to_string(size));
    used.insert(name);
    return it->second;
  };
  for (const auto& [name, t] : reg.params()) t->data = fetch(name, t->data.size());
  for (const auto& [name, buf] : reg.buffers()) *buf = fetch(name, buf->size());
  for (const auto& [name, values] : arrays)
    if (!used.count(name)) throw io_error("checkpoint: unexpected array '" + name + "'");
}

// A model + head rebuilt from a checkpoint, ready for inference.
struct RestoredModel {
  ExperimentConfig config;
  AblationSwitches switches;
  LabelMap labels;
  std::unique_ptr<FteNet> model;
  std::unique_ptr<ClassHead> head;
};

inline RestoredModel restore_model(const Checkpoint& ck) {
  RestoredModel rm;
  rm.config = ck.config;
  rm.switches = ck.switches;
  rm.labels = ck.labels;
  rm.model = std::make_unique<FteNet>(ck.config.model_config(ck.switches), ck.config.seed);
  rm.head = std::make_unique<ClassHead>(rm.model->reg, ck.config.seed, "head", ck.labels.size(),
                                        static_cast<int>(ck.config.n_subclusters),
                                        rm.model->embed_dim);
  restore_registry(rm.model->reg, ck.arrays);
  return rm;
}

}  // namespace fteasd
