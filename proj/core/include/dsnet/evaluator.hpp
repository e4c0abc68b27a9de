#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dsnet/config.hpp"
#include "dsnet/data.hpp"
#include "dsnet/metrics.hpp"
#include "dsnet/model.hpp"

namespace dsnet::eval {

struct Prediction {
  std::string id;
  std::string speaker;
  int label = 0;
  int pred = 0;
  std::array<double, metrics::kNumClasses> probs{};
};

// Inference-path predictions in record order. Switches `model` to eval mode.
std::vector<Prediction> predict(model::DsNet& model, const std::vector<data::UtteranceRecord>& records,
                                data::FeatureStore& store, std::size_t batch_size = 32);

/// Leave-one-speaker-out split over sorted speaker ids: fold k tests
/// speakers[k]; validation is the other speaker of its two-speaker session
/// when there is one, else speakers[(k+1) mod S].
struct FoldPlan {
  std::size_t fold = 0;
  std::string test_speaker;
  std::string val_speaker;
};
std::vector<FoldPlan> loso_folds(const std::vector<data::UtteranceRecord>& records);

struct FoldResult {
  std::size_t fold = 0;
  std::string test_speaker;
  std::string val_speaker;
  std::vector<Prediction> predictions;
};

// One JSON object per line, one line per held-out utterance.
void write_fold_result(const std::filesystem::path& path, const FoldResult& fold);
FoldResult read_fold_result(const std::filesystem::path& path);

struct MetricsSummary {
  double uar = 0.0;
  std::array<double, metrics::kNumClasses> per_class_recall{};
  metrics::ConfusionMatrix confusion;
  std::size_t count = 0;
  std::string config_hash;
};

// Scores the concatenation of all predictions (not a mean of per-fold scores).
MetricsSummary summarize(const std::vector<Prediction>& predictions, const std::string& config_hash);
std::string metrics_json(const MetricsSummary& summary);
// Reads every fold_<k>.jsonl under `dir` and summarizes them together.
MetricsSummary aggregate_folds(const std::filesystem::path& dir, const std::string& config_hash);

struct LosoOptions {
  config::Config config;
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
};

struct LosoResult {
  std::vector<FoldResult> folds;
  MetricsSummary summary;
};

/// Trains one model per fold (seed + 7919·k), predicts the held-out speaker,
/// and writes `fold_<k>/` checkpoints, `fold_<k>.jsonl` and `metrics.json`
/// under out_dir.
LosoResult loso_cv(const std::vector<data::UtteranceRecord>& records, const LosoOptions& options);

struct LoadedModel {
  std::unique_ptr<model::DsNet> model;
  std::string model_hash;
};
// Restores a model from a trainer checkpoint and its metadata sidecar.
LoadedModel load_model(const std::filesystem::path& checkpoint, model::Phase phase = model::Phase::kInference);

struct CrossCorpusResult {
  std::vector<double> uars;
  double mean = 0.0;
  double stddev = 0.0;
  std::string model_hash;
};

// Each checkpoint predicts every record; UARs are averaged. All checkpoints
// must share one model configuration.
CrossCorpusResult cross_corpus_eval(const std::vector<std::filesystem::path>& checkpoints,
                                    const std::vector<data::UtteranceRecord>& records, data::FeatureStore& store,
                                    std::size_t batch_size = 32);

/// CSV: id,speaker,label,split, then h_*, zer_*, zei_* (D columns each).
/// `splits` maps utterance id to a split name; unmapped ids get "all".
void export_embeddings(model::DsNet& model, const std::vector<data::UtteranceRecord>& records,
                       data::FeatureStore& store, const std::filesystem::path& out,
                       const std::map<std::string, std::string>& splits = {}, std::size_t batch_size = 32);

struct ClusterScores {
  double emotion_zer = 0.0;
  double emotion_zei = 0.0;
  double speaker_zer = 0.0;
  double speaker_zei = 0.0;
};

ClusterScores subspace_cluster_scores(const std::filesystem::path& embeddings_csv);

}  // namespace dsnet::eval
