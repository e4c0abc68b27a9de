#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <set>

#include "dsnet/audio.hpp"
#include "dsnet/complexity.hpp"
#include "dsnet/config.hpp"
#include "dsnet/error.hpp"
#include "dsnet/evaluator.hpp"
#include "dsnet/features.hpp"
#include "dsnet/logging.hpp"
#include "dsnet/synth.hpp"
#include "dsnet/trainer.hpp"

namespace dsnet::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string log_level = "info";
  std::vector<std::string> overrides;
  std::string preset;
};

struct Options {
  std::string manifest;
  std::string out_dir;
  std::optional<std::size_t> epochs;
  std::string test_speaker;
  std::string val_speaker;
  std::size_t jobs = 1;
  bool force = false;
  std::vector<std::string> checkpoints;
  std::string out_file;
  std::string phase = "inference";
  std::size_t frames = features::kTargetFrames;
  std::size_t bins = features::kNumMelBins;
  data::SynthOptions synth;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

config::Config resolve_config(const Globals& g, const Options& o) {
  config::Config cfg = g.config_path.empty() ? config::Config() : config::Config::load(g.config_path);
  if (!g.preset.empty()) cfg.merge(ablation_preset(g.preset));
  if (!o.manifest.empty()) cfg.set("data.manifest", o.manifest);
  if (o.epochs) cfg.set("train.max_epochs", std::to_string(*o.epochs));
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) {
    cfg.set("train.seed", std::to_string(*g.seed));
  } else if (!cfg.is_set("train.seed")) {
    if (const char* env = std::getenv("DSNET_SEED"); env != nullptr && *env != '\0') {
      try {
        cfg.set("train.seed", env);
      } catch (const ValidationError& e) {
        throw ValidationError(std::string("DSNET_SEED: ") + e.what());
      }
    }
  }
  return cfg;
}

std::vector<data::UtteranceRecord> load_records(const std::string& path) {
  if (path.empty()) throw ValidationError("no manifest given (use --manifest or data.manifest)");
  if (!fs::exists(path)) throw ValidationError("manifest not found: " + path);
  auto records = data::load_manifest(path);
  if (records.empty()) throw ValidationError("manifest is empty: " + path);
  for (const auto& r : records) {
    if (r.feature_path.empty()) throw ValidationError("record '" + r.id + "' has no features; run featurize first");
  }
  return records;
}

std::vector<data::UtteranceRecord> of_speakers(const std::vector<data::UtteranceRecord>& records,
                                               const std::set<std::string>& keep, bool invert = false) {
  std::vector<data::UtteranceRecord> out;
  for (const auto& r : records) {
    if (keep.contains(r.speaker_id) != invert) out.push_back(r);
  }
  return out;
}

int cmd_featurize(const Options& o, std::ostream& out) {
  auto records = data::load_manifest(o.manifest);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir / "features");
  for (auto& r : records) {
    if (r.audio_path.empty()) throw ValidationError("record '" + r.id + "' has no audio_path");
    r.feature_path = "features/" + r.id + ".dsft";
    if (!o.force && fs::exists(dir / r.feature_path)) continue;
    features::write_feature_file(dir / r.feature_path, features::extract(audio::load_audio(r.audio_path)));
  }
  data::write_manifest(dir / "manifest.jsonl", records);
  out << "featurized " << records.size() << " utterances into " << (dir / "manifest.jsonl").string() << '\n';
  return 0;
}

int cmd_synth(const config::Config& cfg, Options o, std::ostream& out) {
  o.synth.seed = cfg.get_uint("train.seed");
  const auto records = data::synth_corpus(o.synth, o.out_dir);
  out << "wrote " << records.size() << " utterances for " << o.synth.num_speakers << " speakers to "
      << (fs::path(o.out_dir) / "manifest.jsonl").string() << '\n';
  return 0;
}

int cmd_train(const config::Config& cfg, const Options& o, std::ostream& out) {
  const auto records = load_records(cfg.get("data.manifest"));
  auto plan = eval::loso_folds(records).front();
  const auto speakers = data::speakers_of(records);
  const std::set<std::string> known(speakers.begin(), speakers.end());
  if (!o.test_speaker.empty()) plan.test_speaker = o.test_speaker;
  if (!o.val_speaker.empty()) plan.val_speaker = o.val_speaker;
  for (const auto* s : {&plan.test_speaker, &plan.val_speaker}) {
    if (!known.contains(*s)) throw ValidationError("unknown speaker '" + *s + "'");
  }
  if (plan.test_speaker == plan.val_speaker) throw ValidationError("test and validation speakers must differ");

  config::Config run_cfg = cfg;
  run_cfg.set("train.checkpoint_dir", o.out_dir);
  const auto tc = train::train_config_from(run_cfg);
  model::DsNet net(config::model_config_from(cfg), tc.seed);
  const auto train_set = of_speakers(records, {plan.test_speaker, plan.val_speaker}, true);
  const auto val_set = of_speakers(records, {plan.val_speaker});
  const auto test_set = of_speakers(records, {plan.test_speaker});
  data::FeatureStore store;
  const auto result = train::train_fold(net, train_set, val_set, tc, store, &cfg);

  eval::FoldResult fold{0, plan.test_speaker, plan.val_speaker, eval::predict(net, test_set, store, tc.batch_size)};
  eval::write_fold_result(fs::path(o.out_dir) / "predictions.jsonl", fold);
  const auto summary = eval::summarize(fold.predictions, cfg.hash());
  write_text(fs::path(o.out_dir) / "metrics.json", eval::metrics_json(summary));
  out << "best epoch " << result.best_epoch << " (val UAR " << result.best_val_uar << "); test speaker "
      << plan.test_speaker << " UAR " << summary.uar << '\n';
  return 0;
}

int cmd_loso(const config::Config& cfg, const Options& o, std::ostream& out) {
  const auto records = load_records(cfg.get("data.manifest"));
  eval::LosoOptions lo{cfg, o.out_dir, o.jobs};
  const auto result = eval::loso_cv(records, lo);
  out << result.folds.size() << " folds, " << result.summary.count << " predictions, UAR " << result.summary.uar
      << '\n';
  return 0;
}

int cmd_eval(const config::Config& cfg, const Options& o, std::ostream& out) {
  const auto records = load_records(cfg.get("data.manifest"));
  if (o.checkpoints.size() != 1) throw ValidationError("eval takes exactly one --checkpoint");
  auto loaded = eval::load_model(o.checkpoints.front());
  data::FeatureStore store;
  eval::FoldResult fold{0, "", "", eval::predict(*loaded.model, records, store, cfg.get_uint("train.batch_size"))};
  eval::write_fold_result(fs::path(o.out_dir) / "predictions.jsonl", fold);
  const auto meta = train::read_checkpoint_meta(o.checkpoints.front());
  const auto summary = eval::summarize(fold.predictions, meta.config_hash);
  write_text(fs::path(o.out_dir) / "metrics.json", eval::metrics_json(summary));
  out << summary.count << " predictions, UAR " << summary.uar << '\n';
  return 0;
}

int cmd_cross_eval(const config::Config& cfg, const Options& o, std::ostream& out) {
  std::string manifest = cfg.get("data.eval_manifest");
  if (!o.manifest.empty() || manifest.empty()) manifest = cfg.get("data.manifest");
  const auto records = load_records(manifest);
  std::vector<fs::path> ckpts(o.checkpoints.begin(), o.checkpoints.end());
  data::FeatureStore store;
  const auto r = eval::cross_corpus_eval(ckpts, records, store, cfg.get_uint("train.batch_size"));
  ordered_json j{{"uars", r.uars}, {"mean", r.mean}, {"std", r.stddev}, {"model_hash", r.model_hash}};
  write_text(fs::path(o.out_dir) / "cross_corpus.json", j.dump(2) + "\n");
  out << r.uars.size() << " checkpoints, mean UAR " << r.mean << " (std " << r.stddev << ")\n";
  return 0;
}

int cmd_complexity(const config::Config& cfg, const Options& o, std::ostream& out) {
  const auto rep =
      complexity::report(config::model_config_from(cfg), complexity::parse_phase(o.phase), o.frames, o.bins);
  const auto text = complexity::to_json(rep);
  write_text(fs::path(o.out_dir) / "complexity.json", text + "\n");
  out << text << '\n';
  return 0;
}

int cmd_export(const config::Config& cfg, const Options& o, std::ostream& out) {
  const auto records = load_records(cfg.get("data.manifest"));
  if (o.checkpoints.size() != 1) throw ValidationError("export-embeddings takes exactly one --checkpoint");
  auto loaded = eval::load_model(o.checkpoints.front(), model::Phase::kTrain);
  const fs::path csv = o.out_file.empty() ? fs::path(o.out_dir) / "embeddings.csv" : fs::path(o.out_file);
  data::FeatureStore store;
  eval::export_embeddings(*loaded.model, records, store, csv, {}, cfg.get_uint("train.batch_size"));
  const auto s = eval::subspace_cluster_scores(csv);
  ordered_json j{{"emotion_zer", s.emotion_zer},
                 {"emotion_zei", s.emotion_zei},
                 {"speaker_zer", s.speaker_zer},
                 {"speaker_zei", s.speaker_zei}};
  write_text(fs::path(o.out_dir) / "silhouette.json", j.dump(2) + "\n");
  out << "wrote " << records.size() << " rows to " << csv.string() << '\n' << j.dump(2) << '\n';
  return 0;
}

void write_run_record(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                      const config::Config* cfg, int status, const std::string& message) {
  ordered_json j;
  j["command"] = command;
  j["argv"] = args;
  j["status"] = status;
  if (!message.empty()) j["error"] = message;
  if (cfg != nullptr) {
    j["config_hash"] = cfg->hash();
    j["seed"] = cfg->get_uint("train.seed");
    j["config"] = cfg->entries();
  }
  j["versions"] = {{"dsnet", DSNET_VERSION}, {"compiler", __VERSION__}, {"cplusplus", __cplusplus}};
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / "run.json", std::ios::binary);
  if (out) out << j.dump(2) << '\n';
}

}  // namespace

std::vector<std::string> preset_names() { return {"full", "no_calib", "no_orth", "no_recon", "baseline"}; }

std::map<std::string, std::string> ablation_preset(const std::string& name) {
  std::map<std::string, std::string> o{
      {"model.variant", "dsnet"}, {"loss.alpha", "1"}, {"loss.beta", "1"}, {"loss.gamma", "1"}};
  if (name == "full") return o;
  if (name == "no_calib") {
    o["loss.gamma"] = "0";
  } else if (name == "no_orth") {
    o["loss.alpha"] = "0";
  } else if (name == "no_recon") {
    o["loss.beta"] = "0";
  } else if (name == "baseline") {
    o = {{"model.variant", "baseline"}};
  } else {
    throw ValidationError("unknown preset '" + name + "' (expected full, no_calib, no_orth, no_recon or baseline)");
  }
  return o;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DSNet speech emotion recognition toolkit", "dsnet"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  Options o;
  app.add_option("--config", g.config_path, "Flat key=value config file");
  app.add_option("--seed", g.seed, "Seed (overrides config and DSNET_SEED)");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  auto add_preset = [&](CLI::App* c) {
    c->add_option("--preset", g.preset, "Ablation preset: full, no_calib, no_orth, no_recon, baseline");
  };
  auto add_manifest = [&](CLI::App* c, bool required) {
    c->add_option("--manifest", o.manifest, "Manifest (JSON lines)")->required(required);
  };
  auto add_out_dir = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--out-dir", o.out_dir, "Output directory");
    if (required) opt->required();
  };

  auto* featurize = app.add_subcommand("featurize", "Extract LMFB+delta features for a manifest of WAV files");
  add_manifest(featurize, true);
  add_out_dir(featurize, true);
  featurize->add_flag("--force", o.force, "Recompute existing feature files");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted speaker bias");
  synth->add_option("--out,--out-dir", o.out_dir, "Output directory")->required();
  synth->add_option("--speakers", o.synth.num_speakers, "Number of speakers")->capture_default_str();
  synth->add_option("--per-speaker", o.synth.utts_per_speaker, "Utterances per speaker")->capture_default_str();
  synth->add_option("--frames", o.synth.frames, "Frames per utterance")->capture_default_str();
  synth->add_option("--bins", o.synth.bins, "Mel bins")->capture_default_str();
  synth->add_option("--speaker-bias", o.synth.speaker_bias_scale, "Speaker bias scale")->capture_default_str();
  synth->add_option("--emotion-scale", o.synth.emotion_scale, "Emotion template gain")->capture_default_str();
  synth->add_option("--noise", o.synth.noise_scale, "Noise standard deviation")->capture_default_str();
  synth->add_option("--prefix", o.synth.speaker_prefix, "Speaker id prefix")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train one model; the test speaker is held out");
  add_manifest(train, false);
  add_out_dir(train, true);
  add_preset(train);
  train->add_option("--epochs", o.epochs, "Override train.max_epochs");
  train->add_option("--test-speaker", o.test_speaker, "Held-out test speaker (default: first LOSO fold)");
  train->add_option("--val-speaker", o.val_speaker, "Validation speaker (default: first LOSO fold)");

  auto* loso = app.add_subcommand("loso", "Leave-one-speaker-out cross-validation");
  add_manifest(loso, false);
  add_out_dir(loso, true);
  add_preset(loso);
  loso->add_option("--epochs", o.epochs, "Override train.max_epochs");
  loso->add_option("--jobs", o.jobs, "Folds trained in parallel")->capture_default_str()->check(CLI::PositiveNumber);

  auto* evalc = app.add_subcommand("eval", "Predict a manifest with one checkpoint");
  evalc->add_option("--checkpoint", o.checkpoints, "Trainer checkpoint")->required()->expected(1);
  add_manifest(evalc, false);
  add_out_dir(evalc, true);

  auto* cross = app.add_subcommand("cross-eval", "Average UAR of several checkpoints on another corpus");
  cross->add_option("--checkpoint", o.checkpoints, "Trainer checkpoints (repeatable)")->required();
  add_manifest(cross, false);
  add_out_dir(cross, true);

  auto* complexity_cmd = app.add_subcommand("complexity", "Analytic parameter and MAC counts");
  complexity_cmd->add_option("--phase", o.phase, "train or inference")->capture_default_str();
  complexity_cmd->add_option("--frames", o.frames, "Input frames")->capture_default_str();
  complexity_cmd->add_option("--bins", o.bins, "Input mel bins")->capture_default_str();
  add_out_dir(complexity_cmd, false);
  add_preset(complexity_cmd);

  auto* exportc = app.add_subcommand("export-embeddings", "Write h, z_er and z_ei per utterance plus silhouettes");
  exportc->add_option("--checkpoint", o.checkpoints, "Trainer checkpoint")->required()->expected(1);
  add_manifest(exportc, false);
  add_out_dir(exportc, true);
  exportc->add_option("--out", o.out_file, "CSV path (default <out-dir>/embeddings.csv)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  if (o.out_dir.empty()) o.out_dir = ".";
  std::optional<config::Config> cfg;
  try {
    log::set_level(g.log_level);
    cfg = resolve_config(g, o);
    err << "# resolved config (hash " << cfg->hash() << ")\n" << cfg->dump();
    fs::create_directories(o.out_dir);
    int status = 0;
    if (name == "featurize") {
      status = cmd_featurize(o, out);
    } else if (name == "synth") {
      status = cmd_synth(*cfg, o, out);
    } else if (name == "train") {
      status = cmd_train(*cfg, o, out);
    } else if (name == "loso") {
      status = cmd_loso(*cfg, o, out);
    } else if (name == "eval") {
      status = cmd_eval(*cfg, o, out);
    } else if (name == "cross-eval") {
      status = cmd_cross_eval(*cfg, o, out);
    } else if (name == "complexity") {
      status = cmd_complexity(*cfg, o, out);
    } else {
      status = cmd_export(*cfg, o, out);
    }
    write_run_record(o.out_dir, name, args, &*cfg, status, "");
    return status;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    write_run_record(o.out_dir, name, args, cfg ? &*cfg : nullptr, 1, e.what());
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    write_run_record(o.out_dir, name, args, cfg ? &*cfg : nullptr, 2, e.what());
    return 2;
  }
}

}  // namespace dsnet::cli
