#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsnet/config.hpp"
#include "dsnet/data.hpp"
#include "dsnet/losses.hpp"
#include "dsnet/model.hpp"

namespace dsnet::train {

enum class SelectBy { kUar, kLoss };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t max_epochs = 100;
  std::size_t plateau_patience = 20;
  double lr_halving_factor = 0.5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  losses::LossOptions loss;
  bool stop_gradient_neutral = false;
  SelectBy select_by = SelectBy::kUar;
  // Empty: keep everything in memory.
  std::filesystem::path checkpoint_dir;
  bool save_epoch_checkpoints = true;

  void validate() const;
};

TrainConfig train_config_from(const config::Config& cfg);

struct LossValues {
  double total = 0.0;
  double task = 0.0;
  double orth = 0.0;
  double recon = 0.0;
  double calib = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  LossValues loss;
  double uar = 0.0;
  double lr = 0.0;
};

inline constexpr const char* kEpochLogHeader = "epoch,split,loss_total,loss_task,loss_orth,loss_recon,loss_calib,uar,lr";

std::string epoch_log_csv(const std::vector<EpochLog>& rows);
void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& rows);

// Identifies a checkpoint written by the trainer.
struct CheckpointMeta {
  std::string profile = "full";  // or "deploy"
  std::string model_hash;
  std::string config_hash;
  std::string model_config;  // dump of the model.* keys
  std::size_t epoch = 0;
  double val_uar = 0.0;
  double val_loss = 0.0;
};

void write_checkpoint_meta(const std::filesystem::path& ckpt_path, const CheckpointMeta& meta);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& ckpt_path);
std::filesystem::path meta_path_for(const std::filesystem::path& ckpt_path);

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_uar = 0.0;
  double best_val_loss = 0.0;
  std::filesystem::path best_checkpoint;  // empty when checkpoint_dir is empty
};

/// Validation losses and UAR in eval mode. Losses come from the full training
/// dataflow against `val`'s own neutral references; predictions come from the
/// inference path. Leaves parameters, running statistics and the dropout
/// stream untouched.
struct Evaluation {
  LossValues loss;
  double uar = 0.0;
};
Evaluation evaluate_split(model::DsNet& model, const std::vector<data::UtteranceRecord>& records,
                          const data::NeutralReferenceMap* neutral, data::FeatureStore& store,
                          const TrainConfig& config);

/// Joint optimization of every active term. On return `model` holds the
/// selected (best) weights and is in eval mode. Batches smaller than two are
/// skipped since batch statistics and the orthogonality term need N ≥ 2.
TrainResult train_fold(model::DsNet& model, const std::vector<data::UtteranceRecord>& train,
                       const std::vector<data::UtteranceRecord>& val, const TrainConfig& config,
                       data::FeatureStore& store, const config::Config* provenance = nullptr);

// Task loss only on encoder and classifier. `model` must be a baseline.
TrainResult train_baseline(model::DsNet& model, const std::vector<data::UtteranceRecord>& train,
                           const std::vector<data::UtteranceRecord>& val, const TrainConfig& config,
                           data::FeatureStore& store, const config::Config* provenance = nullptr);

// Chunks of at most batch_size in order; a trailing single item joins the
// previous chunk.
std::vector<std::vector<std::size_t>> eval_chunks(std::size_t n, std::size_t batch_size);

std::vector<int> argmax_rows(const Tensor& probs);

}  // namespace dsnet::train
