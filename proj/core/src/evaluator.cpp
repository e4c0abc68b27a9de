#include "dsnet/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "dsnet/checkpoint.hpp"
#include "dsnet/error.hpp"
#include "dsnet/logging.hpp"
#include "dsnet/trainer.hpp"

namespace dsnet::eval {
namespace {

using data::UtteranceRecord;
using nlohmann::ordered_json;

std::vector<UtteranceRecord> of_speakers(const std::vector<UtteranceRecord>& records,
                                         const std::set<std::string>& speakers) {
  std::vector<UtteranceRecord> out;
  for (const auto& r : records) {
    if (speakers.contains(r.speaker_id)) out.push_back(r);
  }
  return out;
}

std::string fold_tag(std::size_t k) { return "fold_" + std::to_string(k); }

FoldResult run_fold(const std::vector<UtteranceRecord>& records, const FoldPlan& plan, const LosoOptions& options) {
  std::set<std::string> train_speakers;
  for (const auto& s : data::speakers_of(records)) {
    if (s != plan.test_speaker && s != plan.val_speaker) train_speakers.insert(s);
  }
  const auto train = of_speakers(records, train_speakers);
  const auto val = of_speakers(records, {plan.val_speaker});
  const auto test = of_speakers(records, {plan.test_speaker});
  std::set<int> classes;
  for (const auto& r : train) classes.insert(r.label());
  if (classes.size() != metrics::kNumClasses) {
    throw ValidationError(fold_tag(plan.fold) + ": training split lacks an emotion class");
  }

  config::Config cfg = options.config;
  const std::uint64_t seed = cfg.get_uint("train.seed") + 7919ULL * plan.fold;
  cfg.set("train.seed", std::to_string(seed));
  cfg.set("train.checkpoint_dir", (options.out_dir / fold_tag(plan.fold)).string());
  const auto tc = train::train_config_from(cfg);
  model::DsNet net(config::model_config_from(cfg), seed);
  data::FeatureStore store;
  log::info(fold_tag(plan.fold) + ": test " + plan.test_speaker + ", val " + plan.val_speaker + ", " +
            std::to_string(train.size()) + " training utterances");
  train::train_fold(net, train, val, tc, store, &options.config);

  FoldResult result{plan.fold, plan.test_speaker, plan.val_speaker, predict(net, test, store, tc.batch_size)};
  write_fold_result(options.out_dir / (fold_tag(plan.fold) + ".jsonl"), result);
  return result;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<int> label_codes(const std::vector<std::string>& names) {
  std::map<std::string, int> codes;
  std::vector<int> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(codes.emplace(n, static_cast<int>(codes.size())).first->second);
  return out;
}

}  // namespace

std::vector<Prediction> predict(model::DsNet& model, const std::vector<UtteranceRecord>& records,
                                data::FeatureStore& store, std::size_t batch_size) {
  model.set_mode(ops::Mode::kEval);
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (const auto& chunk : train::eval_chunks(records.size(), std::max<std::size_t>(batch_size, 1))) {
    const data::Batch batch = data::assemble_batch(records, chunk, store, nullptr);
    Graph g(false);
    const Tensor probs = model.forward_infer(g, batch.features);
    const auto pred = train::argmax_rows(probs);
    const auto p = probs.data();
    const std::size_t k = probs.dim(1);
    if (k != metrics::kNumClasses) throw ShapeError("predict: expected four class probabilities");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Prediction pr{batch.ids[i], batch.speaker_ids[i], batch.labels[i], pred[i], {}};
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(i * k), k, pr.probs.begin());
      out.push_back(std::move(pr));
    }
  }
  return out;
}

std::vector<FoldPlan> loso_folds(const std::vector<UtteranceRecord>& records) {
  const auto speakers = data::speakers_of(records);
  if (speakers.size() < 3) throw ValidationError("loso: need at least three speakers");
  std::map<std::string, std::set<std::string>> session_speakers;
  std::map<std::string, std::string> session_of;
  for (const auto& r : records) {
    if (r.session.empty()) continue;
    session_speakers[r.session].insert(r.speaker_id);
    session_of[r.speaker_id] = r.session;
  }
  std::vector<FoldPlan> plans;
  for (std::size_t k = 0; k < speakers.size(); ++k) {
    FoldPlan plan{k, speakers[k], speakers[(k + 1) % speakers.size()]};
    if (const auto it = session_of.find(speakers[k]); it != session_of.end()) {
      const auto& members = session_speakers[it->second];
      if (members.size() == 2) {
        for (const auto& s : members) {
          if (s != speakers[k]) plan.val_speaker = s;
        }
      }
    }
    plans.push_back(plan);
  }
  return plans;
}

void write_fold_result(const std::filesystem::path& path, const FoldResult& fold) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : fold.predictions) {
    ordered_json j{{"fold", fold.fold},   {"test_speaker", fold.test_speaker}, {"val_speaker", fold.val_speaker},
                   {"id", p.id},          {"speaker", p.speaker},              {"label", p.label},
                   {"pred", p.pred},      {"probs", p.probs}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

FoldResult read_fold_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  FoldResult fold;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      fold.fold = j.at("fold").get<std::size_t>();
      fold.test_speaker = j.at("test_speaker").get<std::string>();
      fold.val_speaker = j.at("val_speaker").get<std::string>();
      Prediction p;
      p.id = j.at("id").get<std::string>();
      p.speaker = j.at("speaker").get<std::string>();
      p.label = j.at("label").get<int>();
      p.pred = j.at("pred").get<int>();
      p.probs = j.at("probs").get<std::array<double, metrics::kNumClasses>>();
      fold.predictions.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return fold;
}

MetricsSummary summarize(const std::vector<Prediction>& predictions, const std::string& config_hash) {
  std::vector<int> truth, pred;
  for (const auto& p : predictions) {
    truth.push_back(p.label);
    pred.push_back(p.pred);
  }
  MetricsSummary s;
  s.uar = metrics::uar(truth, pred);
  s.per_class_recall = metrics::per_class_recall(truth, pred);
  s.confusion = metrics::confusion(truth, pred);
  s.count = predictions.size();
  s.config_hash = config_hash;
  return s;
}

std::string metrics_json(const MetricsSummary& s) {
  ordered_json recall = ordered_json::object();
  for (std::size_t c = 0; c < metrics::kNumClasses; ++c) {
    const auto name = std::string(data::emotion_name(static_cast<data::Emotion>(c)));
    recall[name] = s.per_class_recall[c] < 0.0 ? ordered_json(nullptr) : ordered_json(s.per_class_recall[c]);
  }
  ordered_json j{{"uar", s.uar},
                 {"per_class_recall", recall},
                 {"confusion", s.confusion.counts},
                 {"count", s.count},
                 {"config_hash", s.config_hash}};
  return j.dump(2) + "\n";
}

MetricsSummary aggregate_folds(const std::filesystem::path& dir, const std::string& config_hash) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("fold_") && name.ends_with(".jsonl")) files.push_back(entry.path());
  }
  if (files.empty()) throw IoError("no fold_<k>.jsonl files in " + dir.string());
  std::vector<FoldResult> folds;
  for (const auto& f : files) folds.push_back(read_fold_result(f));
  std::sort(folds.begin(), folds.end(), [](const auto& a, const auto& b) { return a.fold < b.fold; });
  std::vector<Prediction> all;
  for (const auto& f : folds) all.insert(all.end(), f.predictions.begin(), f.predictions.end());
  return summarize(all, config_hash);
}

LosoResult loso_cv(const std::vector<UtteranceRecord>& records, const LosoOptions& options) {
  const auto plans = loso_folds(records);
  std::filesystem::create_directories(options.out_dir);
  std::vector<FoldResult> folds(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      try {
        folds[i] = run_fold(records, plans[i], options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, plans.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<Prediction> all;
  for (const auto& f : folds) all.insert(all.end(), f.predictions.begin(), f.predictions.end());
  LosoResult result{std::move(folds), summarize(all, options.config.hash())};
  std::ofstream out(options.out_dir / "metrics.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (options.out_dir / "metrics.json").string());
  out << metrics_json(result.summary);
  return result;
}

LoadedModel load_model(const std::filesystem::path& checkpoint, model::Phase phase) {
  const auto meta = train::read_checkpoint_meta(checkpoint);
  const auto cfg = config::Config::parse(meta.model_config, train::meta_path_for(checkpoint).string());
  if (config::model_hash(cfg) != meta.model_hash) {
    throw ValidationError("checkpoint metadata hash does not match its model config: " + checkpoint.string());
  }
  LoadedModel loaded{std::make_unique<model::DsNet>(config::model_config_from(cfg), 0), meta.model_hash};
  loaded.model->load_checkpoint(read_checkpoint(checkpoint), phase);
  loaded.model->set_mode(ops::Mode::kEval);
  return loaded;
}

CrossCorpusResult cross_corpus_eval(const std::vector<std::filesystem::path>& checkpoints,
                                    const std::vector<UtteranceRecord>& records, data::FeatureStore& store,
                                    std::size_t batch_size) {
  if (checkpoints.empty()) throw ValidationError("cross_corpus_eval: no checkpoints given");
  if (records.empty()) throw ValidationError("cross_corpus_eval: empty evaluation corpus");
  CrossCorpusResult result;
  for (const auto& path : checkpoints) {
    const std::string hash = train::read_checkpoint_meta(path).model_hash;
    if (result.model_hash.empty()) {
      result.model_hash = hash;
    } else if (hash != result.model_hash) {
      throw ValidationError("config hash mismatch: " + path.string() + " has " + hash + ", expected " +
                            result.model_hash);
    }
  }
  for (const auto& path : checkpoints) {
    auto loaded = load_model(path);
    std::vector<int> truth, pred;
    for (const auto& p : predict(*loaded.model, records, store, batch_size)) {
      truth.push_back(p.label);
      pred.push_back(p.pred);
    }
    result.uars.push_back(metrics::uar(truth, pred));
  }
  const double n = static_cast<double>(result.uars.size());
  result.mean = std::accumulate(result.uars.begin(), result.uars.end(), 0.0) / n;
  double ss = 0.0;
  for (double u : result.uars) ss += (u - result.mean) * (u - result.mean);
  result.stddev = std::sqrt(ss / n);
  return result;
}

void export_embeddings(model::DsNet& model, const std::vector<UtteranceRecord>& records, data::FeatureStore& store,
                       const std::filesystem::path& out_path, const std::map<std::string, std::string>& splits,
                       std::size_t batch_size) {
  if (model.config().variant == model::Variant::kBaseline) {
    throw ValidationError("export_embeddings: a baseline model has no disentangled subspaces");
  }
  const std::size_t d = model.config().embedding_dim();
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + out_path.string());
  out << "id,speaker,label,split";
  for (const char* prefix : {"h_", "zer_", "zei_"}) {
    for (std::size_t i = 0; i < d; ++i) out << ',' << prefix << i;
  }
  out << '\n';

  const ops::Mode previous = model.mode();
  model.set_mode(ops::Mode::kEval);
  for (const auto& chunk : train::eval_chunks(records.size(), std::max<std::size_t>(batch_size, 1))) {
    const data::Batch batch = data::assemble_batch(records, chunk, store, nullptr);
    Graph g(false);
    const Tensor h = model.encode(g, batch.features);
    const auto [z_er, z_ei] = model.project(g, h);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto split = splits.find(batch.ids[i]);
      out << batch.ids[i] << ',' << batch.speaker_ids[i] << ','
          << data::emotion_name(static_cast<data::Emotion>(batch.labels[i])) << ','
          << (split == splits.end() ? std::string("all") : split->second);
      for (const Tensor* t : {&h, &z_er, &z_ei}) {
        const auto v = t->data();
        for (std::size_t j = 0; j < d; ++j) out << ',' << config::format_double(v[i * d + j]);
      }
      out << '\n';
    }
  }
  model.set_mode(previous);
  if (!out) throw IoError("failed writing " + out_path.string());
}

ClusterScores subspace_cluster_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("embedding file is empty: " + path.string());
  const auto header = split_csv_line(line);
  if (header.size() < 7 || (header.size() - 4) % 3 != 0) {
    throw ValidationError("embedding header must have 4 + 3·D columns: " + path.string());
  }
  const std::size_t d = (header.size() - 4) / 3;
  std::vector<std::string> speakers, emotions;
  std::vector<double> zer, zei;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    speakers.push_back(cells[1]);
    emotions.push_back(cells[2]);
    for (std::size_t j = 0; j < d; ++j) {
      zer.push_back(std::stod(cells[4 + d + j]));
      zei.push_back(std::stod(cells[4 + 2 * d + j]));
    }
  }
  const auto by_speaker = label_codes(speakers);
  const auto by_emotion = label_codes(emotions);
  return {metrics::silhouette(zer, d, by_emotion), metrics::silhouette(zei, d, by_emotion),
          metrics::silhouette(zer, d, by_speaker), metrics::silhouette(zei, d, by_speaker)};
}

}  // namespace dsnet::eval
