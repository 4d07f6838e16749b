// fteasd: anomalous-sound-detection workbench.
//
// Subcommands:
//   synth      generate the synthetic two-machine corpus + manifest
//   train      train an embedding model on a manifest's train split
//   evaluate   score a manifest's test split against a checkpoint
//   dump-maps  export excitation activations and gate masks for one clip
//   ablate     train and evaluate the module/mask ablation grid
//
// Every command is a pure function of (config, seed, inputs); reruns produce
// byte-identical artifacts. FTEASD_THREADS caps worker threads.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fteasd/audio.hpp"
#include "fteasd/common.hpp"
#include "fteasd/config.hpp"
#include "fteasd/loss.hpp"
#include "fteasd/metrics.hpp"
#include "fteasd/model.hpp"
#include "fteasd/synth.hpp"
#include "fteasd/train.hpp"

namespace {

using namespace fteasd;

// Config sources shared by the commands that build a model or dataset.
// Precedence: preset < config file < --set overrides < dedicated flags.
struct ConfigArgs {
  std::string preset = "desk";
  std::string config_file;
  std::vector<std::string> sets;
  long long seed = -1;    // <0: keep configured value
  long long epochs = -1;  // <0: keep configured value

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Base preset: desk|full")
        ->default_val("desk")
        ->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--config", config_file,
                    "Config file with 'section.key = value' lines, applied over the preset")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", sets,
                    "Override one config key, e.g. --set training.epochs=4 (repeatable)");
    cmd->add_option("--seed", seed, "Override training.seed");
    cmd->add_option("--epochs", epochs, "Override training.epochs");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = ExperimentConfig::preset(preset);
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw io_error("cannot open config file: " + config_file);
      std::ostringstream buf;
      buf << in.rdbuf();
      cfg.apply_text(buf.str());
    }
    for (const std::string& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw argument_error("--set expects key=value, got '" + s + "'");
      auto trim = [](std::string v) {
        auto a = v.find_first_not_of(" \t");
        auto b = v.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
      };
      cfg.apply(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (epochs >= 0) cfg.epochs = epochs;
    cfg.validate();
    return cfg;
  }
};

// Model-variant selection shared by train/ablate.
struct VariantArgs {
  std::string ablate = "none";
  std::string masks = "cft";

  void attach(CLI::App* cmd) {
    cmd->add_option("--ablate", ablate,
                    "Disable branches: none|no-ftc|no-excitation|neither")
        ->default_val("none")
        ->check(CLI::IsMember({"none", "no-ftc", "no-excitation", "neither"}));
    cmd->add_option("--masks", masks,
                    "Excitation gate families, a subset of \"cft\" or \"none\"")
        ->default_val("cft");
  }

  AblationSwitches resolve() const {
    AblationSwitches sw;
    sw.use_ftc = ablate == "none" || ablate == "no-excitation";
    sw.use_excitation = ablate == "none" || ablate == "no-ftc";
    sw.mask = parse_mask(masks);
    return sw;
  }

  static SEMask parse_mask(const std::string& text) {
    SEMask m;
    m.channel = m.frequency = m.time = false;
    if (text == "none") return m;
    if (text.empty()) throw argument_error("--masks must be a subset of \"cft\" or \"none\"");
    for (char ch : text) {
      if (ch == 'c' && !m.channel) m.channel = true;
      else if (ch == 'f' && !m.frequency) m.frequency = true;
      else if (ch == 't' && !m.time) m.time = true;
      else throw argument_error("--masks: unexpected or repeated character '" +
                                std::string(1, ch) + "' (use a subset of \"cft\" or \"none\")");
    }
    return m;
  }
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out << text;
  if (!out) throw io_error("failed while writing " + path);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int run_synth(const ConfigArgs& cargs, const std::string& out_dir, const SynthCounts& counts) {
  ExperimentConfig cfg = cargs.resolve();
  std::string manifest = generate_dataset(desk_profiles(), counts, out_dir, cfg.seed,
                                          cfg.sample_rate, cfg.clip_seconds);
  std::size_t rows = load_manifest(manifest).size();
  std::cout << "wrote " << rows << " clips\n" << manifest << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const ConfigArgs& cargs, const VariantArgs& vargs, const std::string& manifest,
              const std::string& out_path, std::string loss_csv) {
  ExperimentConfig cfg = cargs.resolve();
  AblationSwitches sw = vargs.resolve();
  if (loss_csv.empty()) loss_csv = out_path + ".loss.csv";

  TrainSet data = load_train_set(load_manifest(manifest), cfg);
  std::cout << "training on " << data.waves.size() << " clips, " << data.labels.size()
            << " machine types, variant " << sw.tag() << "\n";

  Trainer trainer(cfg, sw, data.labels);
  std::ofstream log(loss_csv, std::ios::trunc);
  if (!log) throw io_error("cannot write loss log: " + loss_csv);
  std::vector<EpochStats> stats = trainer.fit(data, &log);

  save_checkpoint(out_path, trainer.model().reg, cfg, sw, data.labels);
  if (!stats.empty())
    std::cout << "final epoch loss " << fmt_double(stats.back().loss) << "\n";
  std::cout << "checkpoint " << out_path << "\nloss log " << loss_csv << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int run_evaluate(const std::string& checkpoint, const std::string& manifest,
                 const std::string& out_dir) {
  RestoredModel rm = restore_model(load_checkpoint(checkpoint));
  std::vector<ManifestRow> rows = load_manifest(manifest);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory " + out_dir + ": " + ec.message());

  ScoreReport report = evaluate_manifest(*rm.model, rm.config, rows);

  std::ostringstream scores, machines;
  write_score_csv(scores, report);
  write_report_csv(machines, report);
  std::string text = render_report_text(report);
  std::filesystem::path root(out_dir);
  write_text_file((root / "scores.csv").string(), scores.str());
  write_text_file((root / "report.csv").string(), machines.str());
  write_text_file((root / "report.txt").string(), text);

  std::cout << text << "artifacts in " << out_dir << "\n";
  return report.all_scored() ? 0 : 2;
}

// ---------------------------------------------------------------------------
// dump-maps
// ---------------------------------------------------------------------------

void write_array(const std::filesystem::path& root, const std::string& name, const Tensor& t,
                 std::ostream& index) {
  std::string data_path = (root / (name + ".f64")).string();
  std::ofstream out(data_path, std::ios::trunc | std::ios::binary);
  if (!out) throw io_error("cannot write " + data_path);
  std::string bytes;
  for (double v : t->data) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  }
  out << bytes;
  if (!out) throw io_error("failed while writing " + data_path);

  std::ostringstream meta;
  meta << "dtype float64 little-endian\nshape";
  for (long long d : t->shape) meta << ' ' << d;
  meta << "\n";
  write_text_file((root / (name + ".meta")).string(), meta.str());

  index << name;
  for (long long d : t->shape) index << ' ' << d;
  index << "\n";
}

int run_dump_maps(const std::string& checkpoint, const std::string& clip_path,
                  const std::string& out_dir, long long stage) {
  RestoredModel rm = restore_model(load_checkpoint(checkpoint));
  if (!rm.switches.use_excitation)
    throw argument_error("dump-maps: this checkpoint's model has no excitation network");

  // Excitation sites in forward order: the input gate, the two stem-level
  // gates, then one per downsampling stage.
  std::vector<std::string> sites = {"se_input", "se_a", "se_b"};
  for (std::size_t i = 0; i < rm.model->excitation.stages.size(); ++i)
    sites.push_back("stage" + std::to_string(i + 1) + ".se");
  if (stage < 0 || stage >= static_cast<long long>(sites.size()))
    throw argument_error("dump-maps: stage must lie in [0, " +
                         std::to_string(sites.size() - 1) + "]");
  std::string prefix = "excitation." + sites[static_cast<std::size_t>(stage)];

  WavData wav = read_wav(clip_path);
  if (wav.sample_rate != rm.config.sample_rate)
    throw argument_error("dump-maps: clip sample rate " + std::to_string(wav.sample_rate) +
                         " does not match the checkpoint's " +
                         std::to_string(rm.config.sample_rate));
  std::vector<double> wave = condition_samples(wav.samples, rm.config.clip_samples());
  std::vector<ClipFeatures> feats = {features_from_wave(wave, rm.config)};

  CaptureMap maps;
  rm.model->forward(rm.model->batch_features(feats), /*training=*/false, &maps);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory " + out_dir + ": " + ec.message());
  std::filesystem::path root(out_dir);

  std::ostringstream index;
  long long written = 0;
  for (const auto& [name, tensor] : maps) {
    if (name.rfind(prefix + ".", 0) != 0) continue;
    // Strip the shared prefix: excitation.stage1.se.gate_time -> gate_time.
    write_array(root, name.substr(prefix.size() + 1), tensor, index);
    ++written;
  }
  write_text_file((root / "index.txt").string(), index.str());
  std::cout << "wrote " << written << " arrays for " << prefix << " to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct VariantRow {
  std::string name;
  AblationSwitches sw;
};

int run_ablate(const ConfigArgs& cargs, const std::string& manifest, const std::string& out_csv) {
  ExperimentConfig cfg = cargs.resolve();
  std::vector<ManifestRow> rows = load_manifest(manifest);
  TrainSet data = load_train_set(rows, cfg);

  SEMask cft = VariantArgs::parse_mask("cft");
  SEMask cf = VariantArgs::parse_mask("cf");
  SEMask ct = VariantArgs::parse_mask("ct");
  SEMask c = VariantArgs::parse_mask("c");
  std::vector<VariantRow> variants = {
      {"full", {true, true, cft}},
      {"no_ftc_encoder", {false, true, cft}},
      {"no_excitation_network", {true, false, cft}},
      {"neither", {false, false, cft}},
      {"mask_cft", {true, true, cft}},  // same weights as "full"
      {"mask_cf", {true, true, cf}},
      {"mask_ct", {true, true, ct}},
      {"mask_c", {true, true, c}},
  };

  std::map<std::string, ScoreReport> by_tag;
  std::ostringstream csv;
  csv << "variant,mean_auc,mean_pauc,integrated_score\n";
  for (const VariantRow& v : variants) {
    std::string tag = v.sw.tag();
    auto it = by_tag.find(tag);
    if (it == by_tag.end()) {
      std::cerr << "[ablate] training " << v.name << " (" << tag << ")\n";
      Trainer trainer(cfg, v.sw, data.labels);
      trainer.fit(data);
      it = by_tag.emplace(tag, evaluate_manifest(trainer.model(), cfg, rows)).first;
    }
    const ScoreReport& report = it->second;
    std::vector<double> aucs, paucs;
    for (const MachineMetrics& m : report.machines) {
      if (m.has_auc_source) aucs.push_back(m.auc_source);
      if (m.has_auc_target) aucs.push_back(m.auc_target);
      if (m.has_pauc) paucs.push_back(m.pauc);
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    csv << v.name << ',';
    if (!aucs.empty()) csv << fmt_double(mean(aucs));
    csv << ',';
    if (!paucs.empty()) csv << fmt_double(mean(paucs));
    csv << ',';
    if (report.has_integrated) csv << fmt_double(report.integrated_score);
    csv << "\n";
  }

  write_text_file(out_csv, csv.str());
  std::cout << csv.str() << "table " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-path anomalous-sound-detection workbench"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic corpus and manifest");
  ConfigArgs synth_cfg;
  synth_cfg.attach(synth_cmd);
  std::string synth_out;
  SynthCounts counts;
  synth_cmd->add_option("--out", synth_out, "Dataset output directory")->required();
  synth_cmd->add_option("--source-train", counts.source_train,
                        "Source-domain training clips per machine")
      ->default_val(99);
  synth_cmd->add_option("--target-train", counts.target_train,
                        "Target-domain training clips per machine")
      ->default_val(10);
  synth_cmd->add_option("--test", counts.test, "Test clips per machine (half anomalous)")
      ->default_val(40);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on the manifest's train split");
  ConfigArgs train_cfg;
  VariantArgs train_variant;
  train_cfg.attach(train_cmd);
  train_variant.attach(train_cmd);
  std::string train_manifest, train_out, train_loss_csv;
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
  train_cmd->add_option("--loss-csv", train_loss_csv,
                        "Per-epoch loss CSV (default: <out>.loss.csv)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score the manifest's test split");
  std::string eval_checkpoint, eval_manifest, eval_out_dir;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", eval_manifest, "Dataset manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out-dir", eval_out_dir,
                       "Directory for scores.csv, report.csv, report.txt")
      ->required();

  // dump-maps
  auto* dump_cmd =
      app.add_subcommand("dump-maps", "Export excitation activations and gates for one clip");
  std::string dump_checkpoint, dump_clip, dump_out_dir;
  long long dump_stage = 0;
  dump_cmd->add_option("--checkpoint", dump_checkpoint, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  dump_cmd->add_option("--clip", dump_clip, "WAV clip to push through the model")
      ->required()
      ->check(CLI::ExistingFile);
  dump_cmd->add_option("--out-dir", dump_out_dir, "Directory for the array files")->required();
  dump_cmd->add_option("--stage", dump_stage,
                       "Excitation site index (0 = input gate, then downstream)")
      ->default_val(0);

  // ablate
  auto* ablate_cmd =
      app.add_subcommand("ablate", "Train and evaluate the module/mask ablation grid");
  ConfigArgs ablate_cfg;
  ablate_cfg.attach(ablate_cmd);
  std::string ablate_manifest, ablate_out;
  ablate_cmd->add_option("--manifest", ablate_manifest, "Dataset manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", ablate_out, "Comparison table CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_cmd) return run_synth(synth_cfg, synth_out, counts);
    if (*train_cmd)
      return run_train(train_cfg, train_variant, train_manifest, train_out, train_loss_csv);
    if (*eval_cmd) return run_evaluate(eval_checkpoint, eval_manifest, eval_out_dir);
    if (*dump_cmd) return run_dump_maps(dump_checkpoint, dump_clip, dump_out_dir, dump_stage);
    if (*ablate_cmd) return run_ablate(ablate_cfg, ablate_manifest, ablate_out);
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
