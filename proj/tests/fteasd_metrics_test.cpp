#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fteasd/metrics.hpp"
#include "support/oracles.hpp"

namespace {

using namespace fteasd;

std::vector<double> random_scores(Rng& rng, std::size_t n, bool quantized) {
  std::vector<double> v(n);
  for (auto& x : v) {
    x = rng.uniform(-2.0, 2.0);
    if (quantized) x = std::round(x * 4.0) / 4.0;  // force plenty of ties
  }
  return v;
}

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

TEST(Auc, MatchesPairwiseCountOnRandomSets) {
  // Rank-based and pairwise formulations share numerator and denominator
  // exactly, so agreement is bit-for-bit, ties included.
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t np = 1 + static_cast<std::size_t>(rng.uniform_int(40));
    std::size_t nn = 1 + static_cast<std::size_t>(rng.uniform_int(40));
    bool quantized = trial % 2 == 0;
    std::vector<double> pos = random_scores(rng, np, quantized);
    std::vector<double> neg = random_scores(rng, nn, quantized);
    EXPECT_EQ(auc(pos, neg), oracle::auc_pairwise(pos, neg)) << "trial " << trial;
  }
}

TEST(Auc, HandValues) {
  EXPECT_EQ(auc({2.0, 3.0}, {0.0, 1.0}), 1.0);
  EXPECT_EQ(auc({0.0, 1.0}, {2.0, 3.0}), 0.0);
  EXPECT_EQ(auc({1.0, 2.0}, {1.0, 2.0}), 0.5);  // identical multisets
  EXPECT_EQ(auc({5.0}, {5.0}), 0.5);            // single tied pair
  EXPECT_EQ(auc({1.0, 3.0}, {2.0}), 0.5);       // one win, one loss
}

TEST(Auc, ComplementsSumToOne) {
  Rng rng(202);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a = random_scores(rng, 17, trial % 2 == 0);
    std::vector<double> b = random_scores(rng, 23, trial % 2 == 0);
    EXPECT_NEAR(auc(a, b) + auc(b, a), 1.0, 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  Rng rng(303);
  std::vector<double> pos = random_scores(rng, 25, false);
  std::vector<double> neg = random_scores(rng, 30, false);
  double base = auc(pos, neg);
  auto mapped = [&](double (*f)(double)) {
    std::vector<double> p2(pos.size()), n2(neg.size());
    for (std::size_t i = 0; i < pos.size(); ++i) p2[i] = f(pos[i]);
    for (std::size_t i = 0; i < neg.size(); ++i) n2[i] = f(neg[i]);
    return auc(p2, n2);
  };
  EXPECT_EQ(mapped([](double x) { return std::exp(x); }), base);
  EXPECT_EQ(mapped([](double x) { return 3.0 * x + 7.0; }), base);
  EXPECT_EQ(mapped([](double x) { return std::atan(x); }), base);
}

TEST(Auc, RejectsDegenerateInput) {
  EXPECT_THROW(auc({}, {1.0}), argument_error);
  EXPECT_THROW(auc({1.0}, {}), argument_error);
  EXPECT_THROW(auc({std::nan("")}, {1.0}), argument_error);
  EXPECT_THROW(auc({1.0}, {std::numeric_limits<double>::infinity()}), argument_error);
}

// ---------------------------------------------------------------------------
// Partial AUC
// ---------------------------------------------------------------------------

TEST(Pauc, MatchesThresholdEnumerationOracle) {
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t np = 2 + static_cast<std::size_t>(rng.uniform_int(40));
    std::size_t nn = 2 + static_cast<std::size_t>(rng.uniform_int(40));
    bool quantized = trial % 3 == 0;
    std::vector<double> pos = random_scores(rng, np, quantized);
    std::vector<double> neg = random_scores(rng, nn, quantized);
    double p = rng.uniform(0.05, 0.5);
    EXPECT_NEAR(pauc(pos, neg, p), oracle::pauc_threshold_enum(pos, neg, p), 1e-12)
        << "trial " << trial << " p=" << p;
  }
}

TEST(Pauc, PerfectAndChanceLevels) {
  EXPECT_NEAR(pauc({2.0, 3.0, 4.0}, {0.0, 0.5, 1.0}, 0.1), 1.0, 1e-12);
  // Identical score multisets sit exactly at chance after rescaling.
  EXPECT_NEAR(pauc({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, 0.1), 0.5, 1e-12);
  EXPECT_NEAR(pauc({7.0}, {7.0}, 0.25), 0.5, 1e-12);
}

TEST(Pauc, FullRangeEqualsAuc) {
  // With p = 1 the rescale map reduces to the plain AUC.
  Rng rng(505);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> pos = random_scores(rng, 15, trial % 2 == 0);
    std::vector<double> neg = random_scores(rng, 19, trial % 2 == 0);
    EXPECT_NEAR(pauc(pos, neg, 1.0), auc(pos, neg), 1e-12);
  }
}

TEST(Pauc, RejectsBadRange) {
  EXPECT_THROW(pauc({1.0}, {0.0}, 0.0), argument_error);
  EXPECT_THROW(pauc({1.0}, {0.0}, -0.1), argument_error);
  EXPECT_THROW(pauc({1.0}, {0.0}, 1.5), argument_error);
  EXPECT_THROW(pauc({}, {0.0}, 0.1), argument_error);
}

// ---------------------------------------------------------------------------
// Harmonic mean
// ---------------------------------------------------------------------------

TEST(HarmonicMean, HandValues) {
  EXPECT_DOUBLE_EQ(harmonic_mean({0.7, 0.7, 0.7}), 0.7);
  EXPECT_DOUBLE_EQ(harmonic_mean({1.0, 1.0 / 3.0}), 0.5);
  EXPECT_EQ(harmonic_mean({0.9, 0.0, 0.8}), 0.0);
}

TEST(HarmonicMean, PenalizesImbalanceBelowArithmeticMean) {
  // hm(73.97, 66.38) is ~69.97; the arithmetic mean is ~70.18 and a swapped
  // aggregate like 71.27 does not fit the same value pair.
  double hm = harmonic_mean({73.97, 66.38});
  EXPECT_NEAR(hm, 69.97, 0.005);
  EXPECT_GT(std::abs(hm - 71.27), 1.0);
  EXPECT_LT(hm, 0.5 * (73.97 + 66.38));

  Rng rng(606);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> v(5);
    double amean = 0.0;
    for (auto& x : v) {
      x = rng.uniform(0.1, 2.0);
      amean += x / 5.0;
    }
    EXPECT_LE(harmonic_mean(v), amean + 1e-12);
  }
}

TEST(HarmonicMean, RejectsEmptyAndNegative) {
  EXPECT_THROW(harmonic_mean({}), argument_error);
  EXPECT_THROW(harmonic_mean({0.5, -0.1}), argument_error);
}

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

TEST(Kmeans, RecoversTwoSeparatedPairs) {
  std::vector<std::vector<double>> pts = {
      {1.0, 0.0, 0.1}, {1.0, 0.0, -0.1}, {0.0, 1.0, 0.1}, {0.0, 1.0, -0.1}};
  Rng rng(17);
  auto centers = kmeans(pts, 2, rng);
  ASSERT_EQ(centers.size(), 2u);
  // Expected: the two pair means, unit-normalized, in either order.
  std::vector<double> a = {1.0, 0.0, 0.0}, b = {0.0, 1.0, 0.0};
  auto close = [](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) s += (u[j] - v[j]) * (u[j] - v[j]);
    return std::sqrt(s) < 1e-9;
  };
  bool direct = close(centers[0], a) && close(centers[1], b);
  bool swapped = close(centers[0], b) && close(centers[1], a);
  EXPECT_TRUE(direct || swapped);
}

TEST(Kmeans, IdenticalPointsCollapseToOneDirection) {
  std::vector<std::vector<double>> pts(6, std::vector<double>{3.0, 4.0});
  Rng rng(18);
  auto centers = kmeans(pts, 3, rng);
  ASSERT_EQ(centers.size(), 3u);
  for (const auto& c : centers) {
    EXPECT_NEAR(c[0], 0.6, 1e-12);
    EXPECT_NEAR(c[1], 0.8, 1e-12);
  }
}

TEST(Kmeans, FewPointsAreDuplicatedCyclically) {
  std::vector<std::vector<double>> pts = {{2.0, 0.0}, {0.0, 5.0}};
  Rng rng(19);
  auto centers = kmeans(pts, 5, rng);
  ASSERT_EQ(centers.size(), 5u);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto& expect = (i % 2 == 0) ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
    EXPECT_NEAR(centers[i][0], expect[0], 1e-12) << "center " << i;
    EXPECT_NEAR(centers[i][1], expect[1], 1e-12) << "center " << i;
  }
}

TEST(Kmeans, CoversWellSeparatedDirections) {
  // Points scattered near three orthogonal directions; fitted centers must
  // align with all three (cosine > 0.99 each).
  Rng data_rng(77);
  std::vector<std::vector<double>> dirs = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 60; ++i) {
    const auto& d = dirs[static_cast<std::size_t>(i) % 3];
    std::vector<double> p(3);
    for (std::size_t j = 0; j < 3; ++j) p[j] = d[j] + 0.05 * data_rng.normal();
    pts.push_back(p);
  }
  Rng rng(20);
  auto centers = kmeans(pts, 3, rng);
  ASSERT_EQ(centers.size(), 3u);
  std::vector<bool> covered(3, false);
  for (const auto& c : centers) {
    for (std::size_t k = 0; k < 3; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 3; ++j) dot += c[j] * dirs[k][j];
      if (dot > 0.99) covered[k] = true;
    }
  }
  EXPECT_TRUE(covered[0] && covered[1] && covered[2]);
}

TEST(Kmeans, DeterministicForAGivenRngState) {
  Rng data_rng(88);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> p(4);
    for (auto& x : p) x = data_rng.normal();
    pts.push_back(p);
  }
  Rng r1(9001), r2(9001);
  auto c1 = kmeans(pts, 6, r1);
  auto c2 = kmeans(pts, 6, r2);
  ASSERT_EQ(c1.size(), c2.size());
  for (std::size_t i = 0; i < c1.size(); ++i)
    for (std::size_t j = 0; j < c1[i].size(); ++j) EXPECT_EQ(c1[i][j], c2[i][j]);
}

TEST(Kmeans, RejectsDegenerateInput) {
  Rng rng(21);
  EXPECT_THROW(kmeans({}, 2, rng), argument_error);
  EXPECT_THROW(kmeans({{1.0, 0.0}}, 0, rng), argument_error);
  EXPECT_THROW(kmeans({{1.0, 0.0}, {1.0}}, 1, rng), argument_error);
  // A zero vector cannot become a unit-norm prototype.
  EXPECT_THROW(kmeans({{0.0, 0.0}}, 2, rng), numeric_error);
}

// ---------------------------------------------------------------------------
// Prototype banks and anomaly scores
// ---------------------------------------------------------------------------

TEST(PrototypeBank, CombinesClusterCentersWithCappedTargetExemplars) {
  std::vector<std::vector<double>> source = {
      {1.0, 0.0, 0.1}, {1.0, 0.0, -0.1}, {0.0, 1.0, 0.1}, {0.0, 1.0, -0.1}};
  std::vector<std::vector<double>> target = {{0.0, 0.0, 2.0}, {0.0, 0.0, 3.0}, {0.0, 0.0, 4.0}};
  Rng rng(30);
  PrototypeBank bank = build_prototype_bank("m", source, target, 2, 2, rng);
  EXPECT_EQ(bank.machine_type, "m");
  ASSERT_EQ(bank.prototypes.size(), 4u);  // 2 centers + 2 capped targets
  // Targets follow source centers and are unit-normalized; with the cap at 2
  // the third target embedding is dropped.
  for (std::size_t i = 2; i < 4; ++i) {
    EXPECT_NEAR(bank.prototypes[i][2], 1.0, 1e-12);
    EXPECT_NEAR(bank.prototypes[i][0], 0.0, 1e-12);
  }
  for (const auto& p : bank.prototypes) {
    double n = 0.0;
    for (double x : p) n += x * x;
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(PrototypeBank, WorksWithOnlyOneDomainAndRejectsNone) {
  Rng rng(31);
  std::vector<std::vector<double>> source = {{1.0, 0.0}, {0.0, 1.0}};
  PrototypeBank src_only = build_prototype_bank("m", source, {}, 2, 10, rng);
  EXPECT_EQ(src_only.prototypes.size(), 2u);
  PrototypeBank tgt_only = build_prototype_bank("m", {}, source, 16, 10, rng);
  EXPECT_EQ(tgt_only.prototypes.size(), 2u);
  EXPECT_THROW(build_prototype_bank("m", {}, {}, 2, 2, rng), argument_error);
}

TEST(AnomalyScore, CosineDistanceToNearestPrototype) {
  PrototypeBank bank;
  bank.machine_type = "m";
  bank.prototypes = {{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_NEAR(anomaly_score({5.0, 0.0}, bank), 0.0, 1e-12);   // matches a prototype
  EXPECT_NEAR(anomaly_score({-1.0, -1.0}, bank),             // 135 degrees from both
              1.0 + std::sqrt(0.5), 1e-12);
  PrototypeBank single;
  single.machine_type = "m";
  single.prototypes = {{1.0, 0.0}};
  EXPECT_NEAR(anomaly_score({0.0, 3.0}, single), 1.0, 1e-12);   // orthogonal
  EXPECT_NEAR(anomaly_score({-2.0, 0.0}, single), 2.0, 1e-12);  // opposite
}

TEST(AnomalyScore, InvariantUnderPositiveRescaling) {
  PrototypeBank bank;
  bank.machine_type = "m";
  bank.prototypes = {{0.6, 0.8}, {1.0, 0.0}};
  std::vector<double> e = {0.3, -0.2};
  double base = anomaly_score(e, bank);
  std::vector<double> scaled = {e[0] * 37.5, e[1] * 37.5};
  EXPECT_NEAR(anomaly_score(scaled, bank), base, 1e-12);
}

TEST(AnomalyScore, RejectsDegenerateInput) {
  PrototypeBank empty;
  empty.machine_type = "m";
  EXPECT_THROW(anomaly_score({1.0}, empty), argument_error);
  PrototypeBank bank;
  bank.machine_type = "m";
  bank.prototypes = {{1.0, 0.0}};
  EXPECT_THROW(anomaly_score({0.0, 0.0}, bank), numeric_error);
  EXPECT_THROW(anomaly_score({1.0, 0.0, 0.0}, bank), argument_error);
}

// ---------------------------------------------------------------------------
// Manifest evaluation end to end
// ---------------------------------------------------------------------------

ExperimentConfig eval_experiment() {
  ExperimentConfig c;
  c.sample_rate = 4000;
  c.clip_seconds = 0.128;  // 512 samples
  c.window = 32;
  c.hop = 32;
  c.spectrum_bins = 64;
  c.n_chunks = 2;
  c.overlap = 0.5;
  c.ftc_stem_channels = 2;
  c.ftc_block_channels = {2, 2, 3, 3};
  c.excitation_stem_channels = 2;
  c.excitation_stage_channels = {2, 3, 3, 4};
  c.spectrum_channels = {2, 3, 4};
  c.spectrum_kernels = {5, 3, 3};
  c.spectrum_strides = {2, 2, 2};
  c.spectrum_dense = {8, 8, 6, 6, 6};
  c.gram_embed_dim = 6;
  c.epochs = 1;
  c.batch_size = 4;
  c.n_subclusters = 2;
  c.seed = 7;
  c.source_centers = 2;
  c.target_prototypes = 2;
  c.validate();
  return c;
}

// Writes a tone WAV under dir and returns a manifest row pointing at it.
ManifestRow tone_row(const std::string& dir, const std::string& name, const std::string& machine,
                     Domain domain, Split split, Label label, double hz, std::uint64_t seed,
                     const ExperimentConfig& cfg) {
  Rng rng(seed);
  std::vector<double> w(static_cast<std::size_t>(cfg.clip_samples()));
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = 0.5 * std::sin(2.0 * M_PI * hz * static_cast<double>(i) /
                              static_cast<double>(cfg.sample_rate) +
                          phase) +
           0.02 * rng.uniform(-1.0, 1.0);
  std::string path = dir + "/" + name + ".wav";
  write_wav_pcm16(path, w, static_cast<int>(cfg.sample_rate));
  ManifestRow r;
  r.path = path;
  r.machine_type = machine;
  r.attribute = "v0";
  r.domain = domain;
  r.split = split;
  r.label = label;
  return r;
}

TEST(EvaluateManifest, TrainClipsReusedAsTestScoreNearZero) {
  // Every test row aliases one of its machine's train clips and the prototype
  // counts exceed the clip counts, so each test embedding coincides with one
  // of its own prototypes: all scores collapse to ~0. Within a machine all
  // four test rows point at the *same* file, so their scores tie exactly and
  // every ranking metric sits at chance level.
  ExperimentConfig cfg = eval_experiment();
  FteNet model(cfg.model_config(), cfg.seed);
  std::string dir = testing::TempDir() + "eval_zero";
  std::filesystem::create_directories(dir);

  std::vector<ManifestRow> rows;
  const char* machines[2] = {"alpha", "beta"};
  const double tones[2] = {300.0, 900.0};
  std::uint64_t seed = 1;
  for (int m = 0; m < 2; ++m) {
    std::vector<ManifestRow> train;
    for (int i = 0; i < 2; ++i)
      train.push_back(tone_row(dir, std::string(machines[m]) + "_src" + std::to_string(i),
                               machines[m], Domain::source, Split::train, Label::normal, tones[m],
                               seed++, cfg));
    for (int i = 0; i < 2; ++i)
      train.push_back(tone_row(dir, std::string(machines[m]) + "_tgt" + std::to_string(i),
                               machines[m], Domain::target, Split::train, Label::normal, tones[m],
                               seed++, cfg));
    for (const ManifestRow& t : train) rows.push_back(t);
    // One file reused for every (domain, label) combination of the test split.
    for (int d = 0; d < 2; ++d) {
      for (int l = 0; l < 2; ++l) {
        ManifestRow r = train[0];
        r.split = Split::test;
        r.domain = d == 0 ? Domain::source : Domain::target;
        r.label = l == 0 ? Label::normal : Label::anomalous;
        rows.push_back(r);
      }
    }
  }

  ScoreReport report = evaluate_manifest(model, cfg, rows);
  ASSERT_EQ(report.rows.size(), 8u);
  for (const ScoreRow& r : report.rows)
    EXPECT_LT(r.anomaly_score, 1e-6) << r.clip_path;
  ASSERT_EQ(report.machines.size(), 2u);
  for (const MachineMetrics& mm : report.machines) {
    EXPECT_TRUE(mm.complete()) << mm.machine_type << " " << mm.note;
    EXPECT_NEAR(mm.auc_source, 0.5, 1e-12);  // exactly tied scores
    EXPECT_NEAR(mm.auc_target, 0.5, 1e-12);
    EXPECT_NEAR(mm.pauc, 0.5, 1e-12);
  }
  ASSERT_TRUE(report.has_integrated);
  EXPECT_NEAR(report.integrated_score, 0.5, 1e-12);
  EXPECT_TRUE(report.all_scored());
  EXPECT_TRUE(report.warnings.empty());
}

TEST(EvaluateManifest, ReportsIncompleteAndBanklessMachines) {
  ExperimentConfig cfg = eval_experiment();
  FteNet model(cfg.model_config(), cfg.seed);
  std::string dir = testing::TempDir() + "eval_partial";
  std::filesystem::create_directories(dir);

  std::vector<ManifestRow> rows;
  // "alpha": trainable and complete.
  rows.push_back(tone_row(dir, "a_src", "alpha", Domain::source, Split::train, Label::normal,
                          300.0, 11, cfg));
  rows.push_back(tone_row(dir, "a_tgt", "alpha", Domain::target, Split::train, Label::normal,
                          300.0, 12, cfg));
  rows.push_back(tone_row(dir, "a_t0", "alpha", Domain::source, Split::test, Label::normal, 300.0,
                          13, cfg));
  rows.push_back(tone_row(dir, "a_t1", "alpha", Domain::source, Split::test, Label::anomalous,
                          900.0, 14, cfg));
  rows.push_back(tone_row(dir, "a_t2", "alpha", Domain::target, Split::test, Label::normal, 300.0,
                          15, cfg));
  rows.push_back(tone_row(dir, "a_t3", "alpha", Domain::target, Split::test, Label::anomalous,
                          900.0, 16, cfg));
  // "beta": has a bank but test rows are normal-only, so no metric exists.
  rows.push_back(tone_row(dir, "b_src", "beta", Domain::source, Split::train, Label::normal, 500.0,
                          17, cfg));
  rows.push_back(tone_row(dir, "b_t0", "beta", Domain::source, Split::test, Label::normal, 500.0,
                          18, cfg));
  // "gamma": test rows but no training clips at all.
  rows.push_back(tone_row(dir, "g_t0", "gamma", Domain::source, Split::test, Label::normal, 700.0,
                          19, cfg));

  ScoreReport report = evaluate_manifest(model, cfg, rows);

  // gamma's row is skipped; alpha's four and beta's one are scored.
  EXPECT_EQ(report.rows.size(), 5u);
  for (const ScoreRow& r : report.rows) EXPECT_NE(r.machine_type, "gamma");

  ASSERT_EQ(report.machines.size(), 3u);  // sorted: alpha, beta, gamma
  EXPECT_EQ(report.machines[0].machine_type, "alpha");
  EXPECT_TRUE(report.machines[0].complete());
  EXPECT_EQ(report.machines[1].machine_type, "beta");
  EXPECT_FALSE(report.machines[1].complete());
  EXPECT_NE(report.machines[1].note.find("missing:"), std::string::npos);
  EXPECT_EQ(report.machines[2].machine_type, "gamma");
  EXPECT_NE(report.machines[2].note.find("no training clips"), std::string::npos);

  // Integrated score exists (alpha is complete) but coverage is partial.
  EXPECT_TRUE(report.has_integrated);
  EXPECT_FALSE(report.all_scored());
  EXPECT_GE(report.warnings.size(), 2u);
}

TEST(EvaluateManifest, NoCompleteMachineMeansNoIntegratedScore) {
  ExperimentConfig cfg = eval_experiment();
  FteNet model(cfg.model_config(), cfg.seed);
  std::string dir = testing::TempDir() + "eval_none";
  std::filesystem::create_directories(dir);

  std::vector<ManifestRow> rows;
  rows.push_back(tone_row(dir, "n_src", "solo", Domain::source, Split::train, Label::normal, 400.0,
                          21, cfg));
  rows.push_back(tone_row(dir, "n_t0", "solo", Domain::source, Split::test, Label::normal, 400.0,
                          22, cfg));
  ScoreReport report = evaluate_manifest(model, cfg, rows);
  EXPECT_FALSE(report.has_integrated);
  EXPECT_FALSE(report.all_scored());
  EXPECT_FALSE(report.machines.empty());
  bool saw_unavailable = false;
  for (const std::string& w : report.warnings)
    if (w.find("integrated score unavailable") != std::string::npos) saw_unavailable = true;
  EXPECT_TRUE(saw_unavailable);
}

TEST(EvaluateManifest, DeterministicAcrossRuns) {
  ExperimentConfig cfg = eval_experiment();
  FteNet model(cfg.model_config(), cfg.seed);
  std::string dir = testing::TempDir() + "eval_det";
  std::filesystem::create_directories(dir);

  std::vector<ManifestRow> rows;
  std::uint64_t seed = 41;
  for (int i = 0; i < 3; ++i)
    rows.push_back(tone_row(dir, "d_src" + std::to_string(i), "m", Domain::source, Split::train,
                            Label::normal, 350.0, seed++, cfg));
  rows.push_back(
      tone_row(dir, "d_tgt", "m", Domain::target, Split::train, Label::normal, 350.0, seed++, cfg));
  for (int i = 0; i < 2; ++i) {
    rows.push_back(tone_row(dir, "d_n" + std::to_string(i), "m", Domain::source, Split::test,
                            Label::normal, 350.0, seed++, cfg));
    rows.push_back(tone_row(dir, "d_a" + std::to_string(i), "m", Domain::target, Split::test,
                            Label::anomalous, 950.0, seed++, cfg));
  }
  // Both domains need both labels for completeness.
  rows.push_back(
      tone_row(dir, "d_sa", "m", Domain::source, Split::test, Label::anomalous, 950.0, seed++, cfg));
  rows.push_back(
      tone_row(dir, "d_tn", "m", Domain::target, Split::test, Label::normal, 350.0, seed++, cfg));

  ScoreReport r1 = evaluate_manifest(model, cfg, rows);
  ScoreReport r2 = evaluate_manifest(model, cfg, rows);
  ASSERT_EQ(r1.rows.size(), r2.rows.size());
  for (std::size_t i = 0; i < r1.rows.size(); ++i)
    EXPECT_EQ(r1.rows[i].anomaly_score, r2.rows[i].anomaly_score);
  ASSERT_EQ(r1.machines.size(), r2.machines.size());
  ASSERT_TRUE(r1.machines[0].complete());
  EXPECT_EQ(r1.machines[0].auc_source, r2.machines[0].auc_source);
  EXPECT_EQ(r1.machines[0].auc_target, r2.machines[0].auc_target);
  EXPECT_EQ(r1.machines[0].pauc, r2.machines[0].pauc);
  EXPECT_EQ(r1.integrated_score, r2.integrated_score);
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

ScoreReport sample_report() {
  ScoreReport report;
  ScoreRow row;
  row.clip_path = "m/a.wav";
  row.machine_type = "m";
  row.domain = Domain::source;
  row.label = Label::anomalous;
  row.anomaly_score = 0.25;
  report.rows.push_back(row);
  MachineMetrics complete;
  complete.machine_type = "m";
  complete.has_auc_source = complete.has_auc_target = complete.has_pauc = true;
  complete.auc_source = 0.9;
  complete.auc_target = 0.8;
  complete.pauc = 0.7;
  report.machines.push_back(complete);
  MachineMetrics partial;
  partial.machine_type = "q";
  partial.has_auc_source = true;
  partial.auc_source = 0.6;
  partial.note = "missing: target-domain AUC pAUC";
  report.machines.push_back(partial);
  report.has_integrated = true;
  report.integrated_score = harmonic_mean({0.9, 0.8, 0.7});
  return report;
}

TEST(ReportWriters, ScoreCsvShape) {
  std::ostringstream out;
  write_score_csv(out, sample_report());
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "clip_path,machine_type,domain,label,anomaly_score");
  std::getline(in, line);
  EXPECT_EQ(line, "m/a.wav,m,source,anomalous,0.25");
}

TEST(ReportWriters, ReportCsvBlanksAbsentFieldsAndFooterRecomputes) {
  ScoreReport report = sample_report();
  std::ostringstream out;
  write_report_csv(out, report);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "machine,auc_source,auc_target,pauc");

  // Re-parse the body and recompute the harmonic mean across complete rows.
  std::vector<double> values;
  std::string footer;
  while (std::getline(in, line)) {
    if (line.rfind("integrated_score,", 0) == 0) {
      footer = line.substr(std::string("integrated_score,").size());
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    while (fields.size() < 4) fields.push_back("");  // trailing blanks
    if (fields[0] == "q") {
      EXPECT_EQ(fields[2], "");  // absent metrics stay blank
      EXPECT_EQ(fields[3], "");
      continue;
    }
    for (std::size_t i = 1; i < 4; ++i) values.push_back(std::stod(fields[i]));
  }
  ASSERT_EQ(values.size(), 3u);
  ASSERT_FALSE(footer.empty());
  EXPECT_NEAR(std::stod(footer), harmonic_mean(values), 1e-12);
}

TEST(ReportWriters, EmptyIntegratedLeavesFooterBlank) {
  ScoreReport report;
  MachineMetrics mm;
  mm.machine_type = "m";
  mm.note = "no training clips for this machine";
  report.machines.push_back(mm);
  std::ostringstream out;
  write_report_csv(out, report);
  EXPECT_NE(out.str().find("\nintegrated_score,\n"), std::string::npos);
  std::string text = render_report_text(report);
  EXPECT_NE(text.find("integrated score: unavailable"), std::string::npos);
  EXPECT_NE(text.find("no training clips"), std::string::npos);
}

}  // namespace
