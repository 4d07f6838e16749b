#pragma once

// Detection metrics and prototype-based scoring: tie-averaged AUC, partial
// AUC over a low false-positive-rate range, harmonic-mean aggregation,
// K-means prototype banks (source-domain cluster centers plus target-domain
// exemplars), cosine anomaly scores, and the end-to-end manifest evaluator
// with its CSV/report writers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fteasd/audio.hpp"
#include "fteasd/common.hpp"
#include "fteasd/config.hpp"
#include "fteasd/model.hpp"
#include "fteasd/train.hpp"

namespace fteasd {

// ---------------------------------------------------------------------------
// ROC metrics
// ---------------------------------------------------------------------------

// Mann-Whitney AUC: probability a random positive (anomalous) score exceeds a
// random negative (normal) score, ties counted half. Computed from average
// ranks in O(n log n); exactly equal to the pairwise count.
inline double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty())
    throw argument_error("auc: both score sets must be non-empty");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos.size() + neg.size());
  for (double s : pos) {
    if (!std::isfinite(s)) throw argument_error("auc: non-finite score");
    items.push_back({s, true});
  }
  for (double s : neg) {
    if (!std::isfinite(s)) throw argument_error("auc: non-finite score");
    items.push_back({s, false});
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    // Average rank of the tie group [i, j); ranks are 1-based.
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t)
      if (items[t].positive) rank_sum_pos += avg_rank;
    i = j;
  }
  double np = static_cast<double>(pos.size());
  double nn = static_cast<double>(neg.size());
  double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

// Partial AUC restricted to false-positive rate in [0, p]: trapezoidal area
// under the tie-merged ROC polyline with linear interpolation at FPR = p,
// then rescaled so chance level maps to 0.5 and perfect separation to 1.
inline double pauc(const std::vector<double>& pos, const std::vector<double>& neg,
                   double p = 0.1) {
  if (pos.empty() || neg.empty())
    throw argument_error("pauc: both score sets must be non-empty");
  if (!(p > 0.0 && p <= 1.0)) throw argument_error("pauc: p must lie in (0, 1]");
  for (double s : pos)
    if (!std::isfinite(s)) throw argument_error("pauc: non-finite score");
  for (double s : neg)
    if (!std::isfinite(s)) throw argument_error("pauc: non-finite score");

  // ROC vertices at every distinct score, descending threshold order.
  std::vector<double> ps = pos, ns = neg;
  std::sort(ps.begin(), ps.end(), std::greater<double>());
  std::sort(ns.begin(), ns.end(), std::greater<double>());
  double np = static_cast<double>(ps.size());
  double nn = static_cast<double>(ns.size());

  double area = 0.0;
  double x0 = 0.0, y0 = 0.0;
  std::size_t ip = 0, in = 0;
  bool done = false;
  while (!done && (ip < ps.size() || in < ns.size())) {
    double t;
    if (ip < ps.size() && in < ns.size())
      t = std::max(ps[ip], ns[in]);
    else if (ip < ps.size())
      t = ps[ip];
    else
      t = ns[in];
    while (ip < ps.size() && ps[ip] >= t) ++ip;
    while (in < ns.size() && ns[in] >= t) ++in;
    double x1 = static_cast<double>(in) / nn;
    double y1 = static_cast<double>(ip) / np;
    if (x1 <= p) {
      area += (x1 - x0) * 0.5 * (y0 + y1);
    } else {
      if (x0 < p) {
        double yp = y0 + (y1 - y0) * (p - x0) / (x1 - x0);
        area += (p - x0) * 0.5 * (y0 + yp);
      }
      done = true;
    }
    x0 = x1;
    y0 = y1;
  }
  double min_area = 0.5 * p * p;
  double max_area = p;
  return 0.5 * (1.0 + (area - min_area) / (max_area - min_area));
}

// Harmonic mean over non-negative values; any zero collapses the mean to 0.
inline double harmonic_mean(const std::vector<double>& values) {
  if (values.empty()) throw argument_error("harmonic_mean: empty input");
  double s = 0.0;
  for (double v : values) {
    if (!(v >= 0.0)) throw argument_error("harmonic_mean: values must be non-negative");
    if (v == 0.0) return 0.0;
    s += 1.0 / v;
  }
  return static_cast<double>(values.size()) / s;
}

// ---------------------------------------------------------------------------
// K-means and prototype banks
// ---------------------------------------------------------------------------

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

inline void normalize_unit(std::vector<double>& v, const std::string& what) {
  double s = 0.0;
  for (double x : v) s += x * x;
  double norm = std::sqrt(s);
  if (!(norm > 1e-12)) throw numeric_error(what + " has zero norm");
  for (double& x : v) x /= norm;
}

}  // namespace detail

// Lloyd's algorithm with weighted ("++"-style) seeding: at most 100
// iterations or until the largest center movement drops below 1e-9. With
// |points| <= k the centers are the points themselves, repeated cyclically.
// Centers are L2-normalized after fitting (they serve as cosine prototypes).
inline std::vector<std::vector<double>> kmeans(const std::vector<std::vector<double>>& points,
                                               long long k, Rng& rng) {
  if (points.empty()) throw argument_error("kmeans: no points");
  if (k < 1) throw argument_error("kmeans: k must be positive");
  std::size_t dim = points[0].size();
  if (dim == 0) throw argument_error("kmeans: zero-dimensional points");
  for (const auto& pt : points)
    if (pt.size() != dim) throw argument_error("kmeans: points must share one dimension");

  std::vector<std::vector<double>> centers;
  std::size_t n = points.size();
  if (n <= static_cast<std::size_t>(k)) {
    centers.reserve(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i)
      centers.push_back(points[i % n]);
  } else {
    // Seeding: first center uniform, then proportional to squared distance
    // from the chosen set.
    centers.reserve(static_cast<std::size_t>(k));
    centers.push_back(points[static_cast<std::size_t>(rng.uniform_int(n))]);
    std::vector<double> d2(n);
    while (centers.size() < static_cast<std::size_t>(k)) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, detail::sq_dist(points[i], c));
        d2[i] = best;
        total += best;
      }
      std::size_t pick;
      if (total > 0.0) {
        double r = rng.uniform() * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (r < acc) {
            pick = i;
            break;
          }
        }
      } else {
        // Every point already coincides with a center.
        pick = static_cast<std::size_t>(rng.uniform_int(n));
      }
      centers.push_back(points[pick]);
    }

    std::vector<std::size_t> assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t c = 0; c < centers.size(); ++c) {
          double d = detail::sq_dist(points[i], centers[c]);
          if (d < best) {
            best = d;
            arg = c;
          }
        }
        assign[i] = arg;
      }
      double movement = 0.0;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        std::vector<double> mean(dim, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (assign[i] != c) continue;
          ++count;
          for (std::size_t j = 0; j < dim; ++j) mean[j] += points[i][j];
        }
        if (count == 0) continue;  // empty cluster keeps its previous center
        for (std::size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(count);
        movement = std::max(movement, std::sqrt(detail::sq_dist(mean, centers[c])));
        centers[c] = std::move(mean);
      }
      if (movement < 1e-9) break;
    }
  }
  for (std::size_t c = 0; c < centers.size(); ++c)
    detail::normalize_unit(centers[c], "kmeans: center " + std::to_string(c));
  return centers;
}

// Per-machine reference set: cluster centers fitted on source-domain normal
// embeddings plus the target-domain normal embeddings themselves (capped at
// the configured count), all unit norm.
struct PrototypeBank {
  std::string machine_type;
  std::vector<std::vector<double>> prototypes;
};

inline PrototypeBank build_prototype_bank(const std::string& machine_type,
                                          const std::vector<std::vector<double>>& source_embeddings,
                                          const std::vector<std::vector<double>>& target_embeddings,
                                          long long k_source, long long max_target, Rng& rng) {
  if (source_embeddings.empty() && target_embeddings.empty())
    throw argument_error("prototype bank: no embeddings for machine '" + machine_type + "'");
  PrototypeBank bank;
  bank.machine_type = machine_type;
  if (!source_embeddings.empty()) {
    for (auto& c : kmeans(source_embeddings, k_source, rng)) bank.prototypes.push_back(std::move(c));
  }
  long long taken = 0;
  for (const auto& e : target_embeddings) {
    if (taken >= max_target) break;
    std::vector<double> p = e;
    detail::normalize_unit(p, "prototype bank: target embedding");
    bank.prototypes.push_back(std::move(p));
    ++taken;
  }
  return bank;
}

// Minimum cosine distance from the embedding to any prototype; in [0, 2].
inline double anomaly_score(const std::vector<double>& embedding, const PrototypeBank& bank) {
  if (bank.prototypes.empty())
    throw argument_error("anomaly score: empty prototype bank for '" + bank.machine_type + "'");
  std::vector<double> e = embedding;
  detail::normalize_unit(e, "anomaly score: test embedding");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : bank.prototypes) {
    if (p.size() != e.size())
      throw argument_error("anomaly score: embedding dimension mismatch");
    double dot = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) dot += e[j] * p[j];
    best = std::min(best, 1.0 - dot);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Manifest evaluation
// ---------------------------------------------------------------------------

struct ScoreRow {
  std::string clip_path;
  std::string machine_type;
  Domain domain = Domain::source;
  Label label = Label::normal;
  double anomaly_score = 0.0;
};

struct MachineMetrics {
  std::string machine_type;
  bool has_auc_source = false;
  bool has_auc_target = false;
  bool has_pauc = false;
  double auc_source = 0.0;
  double auc_target = 0.0;
  double pauc = 0.0;
  std::string note;  // set when something is missing

  bool complete() const { return has_auc_source && has_auc_target && has_pauc; }
};

struct ScoreReport {
  std::vector<ScoreRow> rows;             // scored test clips, manifest order
  std::vector<MachineMetrics> machines;   // per machine type, sorted
  bool has_integrated = false;
  double integrated_score = 0.0;
  std::vector<std::string> warnings;

  bool all_scored() const {
    if (!has_integrated) return false;
    for (const auto& m : machines)
      if (!m.complete()) return false;
    return true;
  }
};

namespace detail {

// Loads, conditions, and embeds the given rows in batches. Row order is kept.
inline std::vector<std::vector<double>> embed_rows(const FteNet& model,
                                                   const ExperimentConfig& cfg,
                                                   const std::vector<ManifestRow>& rows) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < rows.size(); start += bs) {
    std::size_t stop = std::min(rows.size(), start + bs);
    std::vector<std::vector<double>> waves;
    waves.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) {
      AudioClip clip = load_clip(rows[i]);
      waves.push_back(condition_samples(clip.samples, cfg.clip_samples()));
    }
    for (auto& e : embed_waves(model, cfg, waves)) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace detail

// Builds per-machine prototype banks from the manifest's train split, scores
// every test clip, and computes per-machine AUC (per domain), pAUC (domains
// pooled), and the harmonic-mean integrated score over all complete
// per-machine values. Machines with missing pieces are reported with notes
// and excluded from the integrated score.
inline ScoreReport evaluate_manifest(const FteNet& model, const ExperimentConfig& cfg,
                                     const std::vector<ManifestRow>& rows) {
  std::vector<ManifestRow> test_rows;
  std::map<std::string, std::vector<ManifestRow>> train_by_machine;
  for (const ManifestRow& r : rows) {
    if (r.split == Split::train)
      train_by_machine[r.machine_type].push_back(r);
    else
      test_rows.push_back(r);
  }

  ScoreReport report;
  if (test_rows.empty()) {
    report.warnings.push_back("manifest has no test rows");
    return report;
  }

  // Machines appearing in the test split, sorted (map order).
  std::map<std::string, PrototypeBank> banks;
  std::map<std::string, std::string> bank_errors;
  std::set<std::string> test_machines;
  for (const ManifestRow& r : test_rows) test_machines.insert(r.machine_type);

  for (const std::string& machine : test_machines) {
    auto it = train_by_machine.find(machine);
    if (it == train_by_machine.end()) {
      bank_errors[machine] = "no training clips for this machine";
      report.warnings.push_back("machine '" + machine + "': no training clips, test rows skipped");
      continue;
    }
    std::vector<ManifestRow> source_rows, target_rows;
    for (const ManifestRow& r : it->second)
      (r.domain == Domain::source ? source_rows : target_rows).push_back(r);
    std::vector<std::vector<double>> source_emb = detail::embed_rows(model, cfg, source_rows);
    std::vector<std::vector<double>> target_emb = detail::embed_rows(model, cfg, target_rows);
    Rng rng(mix_seed(cfg.seed, fnv1a("kmeans:" + machine)));
    banks.emplace(machine, build_prototype_bank(machine, source_emb, target_emb,
                                                cfg.source_centers, cfg.target_prototypes, rng));
  }

  // Score the test clips that have a bank, keeping manifest order.
  std::vector<ManifestRow> scoreable;
  for (const ManifestRow& r : test_rows)
    if (banks.count(r.machine_type)) scoreable.push_back(r);
  std::vector<std::vector<double>> test_emb = detail::embed_rows(model, cfg, scoreable);
  for (std::size_t i = 0; i < scoreable.size(); ++i) {
    const ManifestRow& r = scoreable[i];
    ScoreRow row;
    row.clip_path = r.path;
    row.machine_type = r.machine_type;
    row.domain = r.domain;
    row.label = r.label;
    row.anomaly_score = anomaly_score(test_emb[i], banks.at(r.machine_type));
    report.rows.push_back(std::move(row));
  }

  // Per-machine metrics.
  std::vector<double> integrated_values;
  for (const std::string& machine : test_machines) {
    MachineMetrics mm;
    mm.machine_type = machine;
    if (bank_errors.count(machine)) {
      mm.note = bank_errors.at(machine);
      report.machines.push_back(std::move(mm));
      continue;
    }
    std::vector<double> pos_src, neg_src, pos_tgt, neg_tgt;
    for (const ScoreRow& row : report.rows) {
      if (row.machine_type != machine) continue;
      bool anomalous = row.label == Label::anomalous;
      if (row.domain == Domain::source)
        (anomalous ? pos_src : neg_src).push_back(row.anomaly_score);
      else
        (anomalous ? pos_tgt : neg_tgt).push_back(row.anomaly_score);
    }
    std::vector<double> pos_all = pos_src, neg_all = neg_src;
    pos_all.insert(pos_all.end(), pos_tgt.begin(), pos_tgt.end());
    neg_all.insert(neg_all.end(), neg_tgt.begin(), neg_tgt.end());

    std::string missing;
    if (!pos_src.empty() && !neg_src.empty()) {
      mm.auc_source = auc(pos_src, neg_src);
      mm.has_auc_source = true;
    } else {
      missing += " source-domain AUC";
    }
    if (!pos_tgt.empty() && !neg_tgt.empty()) {
      mm.auc_target = auc(pos_tgt, neg_tgt);
      mm.has_auc_target = true;
    } else {
      missing += " target-domain AUC";
    }
    if (!pos_all.empty() && !neg_all.empty()) {
      mm.pauc = pauc(pos_all, neg_all);
      mm.has_pauc = true;
    } else {
      missing += " pAUC";
    }
    if (!missing.empty()) {
      mm.note = "missing:" + missing;
      report.warnings.push_back("machine '" + machine + "' lacks scores for:" + missing +
                                "; excluded from the integrated score");
    }
    if (mm.complete()) {
      integrated_values.push_back(mm.auc_source);
      integrated_values.push_back(mm.auc_target);
      integrated_values.push_back(mm.pauc);
    }
    report.machines.push_back(std::move(mm));
  }

  if (!integrated_values.empty()) {
    report.integrated_score = harmonic_mean(integrated_values);
    report.has_integrated = true;
  } else {
    report.warnings.push_back("no machine has complete metrics; integrated score unavailable");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline void write_score_csv(std::ostream& out, const ScoreReport& report) {
  out << "clip_path,machine_type,domain,label,anomaly_score\n";
  for (const ScoreRow& r : report.rows)
    out << r.clip_path << ',' << r.machine_type << ',' << to_string(r.domain) << ','
        << to_string(r.label) << ',' << fmt_double(r.anomaly_score) << "\n";
}

// Per-machine CSV rows with blank fields for absent metrics, then the footer
// `integrated_score,<value>`.
inline void write_report_csv(std::ostream& out, const ScoreReport& report) {
  out << "machine,auc_source,auc_target,pauc\n";
  for (const MachineMetrics& m : report.machines) {
    out << m.machine_type << ',';
    if (m.has_auc_source) out << fmt_double(m.auc_source);
    out << ',';
    if (m.has_auc_target) out << fmt_double(m.auc_target);
    out << ',';
    if (m.has_pauc) out << fmt_double(m.pauc);
    out << "\n";
  }
  out << "integrated_score," << (report.has_integrated ? fmt_double(report.integrated_score) : "")
      << "\n";
}

inline std::string render_report_text(const ScoreReport& report) {
  std::ostringstream out;
  out << "machine            auc_source  auc_target  pauc\n";
  auto cell = [](bool has, double v) {
    char buf[16];
    if (has)
      std::snprintf(buf, sizeof(buf), "%10.4f", v);
    else
      std::snprintf(buf, sizeof(buf), "%10s", "-");
    return std::string(buf);
  };
  for (const MachineMetrics& m : report.machines) {
    out << m.machine_type;
    for (std::size_t i = m.machine_type.size(); i < 19; ++i) out << ' ';
    out << cell(m.has_auc_source, m.auc_source) << "  " << cell(m.has_auc_target, m.auc_target)
        << "  " << cell(m.has_pauc, m.pauc);
    if (!m.note.empty()) out << "  (" << m.note << ")";
    out << "\n";
  }
  if (report.has_integrated) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", report.integrated_score);
    out << "integrated score: " << buf << "\n";
  } else {
    out << "integrated score: unavailable\n";
  }
  for (const std::string& w : report.warnings) out << "warning: " << w << "\n";
  return out.str();
}

}  // namespace fteasd
