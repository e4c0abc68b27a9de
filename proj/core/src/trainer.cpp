#include "dsnet/trainer.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dsnet/checkpoint.hpp"
#include "dsnet/error.hpp"
#include "dsnet/logging.hpp"
#include "dsnet/metrics.hpp"
#include "dsnet/optim.hpp"

namespace dsnet::train {
namespace {

using data::UtteranceRecord;
using model::DsNet;
using model::Variant;
using nlohmann::json;

struct LossAccumulator {
  LossValues sum;
  double weight = 0.0;

  void add(const losses::LossBundle& b, std::size_t n) {
    const double w = static_cast<double>(n);
    sum.total += w * b.total.item();
    sum.task += w * b.task.item();
    sum.orth += w * b.orth.item();
    sum.recon += w * b.recon.item();
    sum.calib += w * b.calib.item();
    weight += w;
  }

  LossValues mean() const {
    if (weight == 0.0) return {};
    return {sum.total / weight, sum.task / weight, sum.orth / weight, sum.recon / weight, sum.calib / weight};
  }
};

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

std::string fmt(double v) { return config::format_double(v); }

bool is_baseline(const DsNet& m) { return m.config().variant == Variant::kBaseline; }

CheckpointMeta make_meta(const DsNet& model, const config::Config* provenance) {
  config::Config cfg = provenance ? *provenance : config::Config();
  config::store_model_config(cfg, model.config());
  CheckpointMeta meta;
  meta.model_hash = config::model_hash(cfg);
  meta.config_hash = provenance ? provenance->hash() : cfg.hash();
  meta.model_config = cfg.dump("model.");
  return meta;
}

void save(const std::filesystem::path& path, const DsNet& model, const std::vector<model::NamedTensor>& params,
          const optim::AdamState& adam, CheckpointMeta meta) {
  Checkpoint ckpt = model.to_checkpoint(model::Profile::kFull);
  ckpt.optimizer = optim::adam_records(params, adam);
  write_checkpoint(path, ckpt);
  write_checkpoint_meta(path, meta);
}

TrainResult run(DsNet& model, const std::vector<UtteranceRecord>& train, const std::vector<UtteranceRecord>& val,
                const TrainConfig& config, data::FeatureStore& store, const config::Config* provenance) {
  config.validate();
  if (train.empty()) throw ValidationError("train_fold: empty training split");
  if (val.empty()) throw ValidationError("train_fold: empty validation split");

  const bool baseline = is_baseline(model);
  // The baseline has no neutral branch, so it trains on every record.
  std::optional<data::NeutralReferenceMap> train_neutral;
  std::optional<data::NeutralReferenceMap> val_neutral;
  if (!baseline) {
    train_neutral = data::build_neutral_map(train, config.seed);
    val_neutral = data::build_neutral_map(val, config.seed);
  }
  const std::vector<UtteranceRecord>& pool = baseline ? train : train_neutral->pool;
  if (pool.size() < 2) throw ValidationError("train_fold: fewer than two training utterances");

  if (!config.checkpoint_dir.empty()) std::filesystem::create_directories(config.checkpoint_dir);
  const CheckpointMeta base_meta = make_meta(model, provenance);

  const auto params = model.parameters(model::Phase::kTrain);
  optim::AdamState adam = optim::make_adam_state(params, config.learning_rate);
  optim::PlateauScheduler scheduler(config.plateau_patience, config.lr_halving_factor);

  TrainResult result;
  std::vector<NamedArray> best_snapshot;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    model.set_mode(ops::Mode::kTrain);
    const double epoch_lr = adam.learning_rate;
    LossAccumulator acc;
    std::vector<int> truth, pred;
    const auto plan = data::batch_plan(pool.size(), config.batch_size, config.seed, epoch);
    for (std::size_t b = 0; b < plan.size(); ++b) {
      if (plan[b].size() < 2) {
        log::debug("epoch " + std::to_string(epoch) + ": skipping batch of size 1");
        continue;
      }
      data::Batch batch = data::assemble_batch(pool, plan[b], store, baseline ? nullptr : &*train_neutral);
      model.zero_grad();
      Graph g;
      losses::LossBundle loss;
      try {
        const auto fwd = model.forward_train(g, batch.features, batch.neutral_features, config.stop_gradient_neutral);
        loss = losses::total_loss(g, fwd, batch.labels, config.loss);
        if (!std::isfinite(loss.total.item())) throw NumericError("non-finite total loss");
        g.backward(loss.total);
        const auto p = argmax_rows(fwd.probs);
        truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
        pred.insert(pred.end(), p.begin(), p.end());
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " + e.what() +
                           "; utterances: " + join_ids(batch.ids));
      }
      optim::adam_step(params, adam);
      acc.add(loss, batch.size());
    }
    model.zero_grad();
    if (truth.empty()) throw ValidationError("train_fold: no batch of at least two utterances");

    EpochLog train_row{epoch, "train", acc.mean(), metrics::uar(truth, pred), epoch_lr};
    const Evaluation ev = evaluate_split(model, val, baseline ? nullptr : &*val_neutral, store, config);
    EpochLog val_row{epoch, "val", ev.loss, ev.uar, epoch_lr};
    result.log.push_back(train_row);
    result.log.push_back(val_row);
    log::info("epoch " + std::to_string(epoch) + " train L=" + fmt(train_row.loss.total) + " val L=" +
              fmt(val_row.loss.total) + " val UAR=" + fmt(ev.uar) + " lr=" + fmt(epoch_lr));

    const bool improved = !have_best || (config.select_by == SelectBy::kUar ? ev.uar > result.best_val_uar
                                                                           : ev.loss.total < result.best_val_loss);
    CheckpointMeta meta = base_meta;
    meta.epoch = epoch;
    meta.val_uar = ev.uar;
    meta.val_loss = ev.loss.total;
    if (!config.checkpoint_dir.empty() && config.save_epoch_checkpoints) {
      save(config.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), model, params, adam, meta);
    }
    if (improved) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_uar = ev.uar;
      result.best_val_loss = ev.loss.total;
      best_snapshot = model.snapshot();
      if (!config.checkpoint_dir.empty()) {
        result.best_checkpoint = config.checkpoint_dir / "best.ckpt";
        save(result.best_checkpoint, model, params, adam, meta);
      }
    }
    adam.learning_rate = scheduler.update(ev.loss.total, adam.learning_rate);
  }

  if (!config.checkpoint_dir.empty()) write_epoch_log(config.checkpoint_dir / "epochs.csv", result.log);
  model.restore_snapshot(best_snapshot);
  model.set_mode(ops::Mode::kEval);
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
  if (max_epochs == 0) throw ValidationError("train: max_epochs must be positive");
  if (plateau_patience == 0) throw ValidationError("train: plateau_patience must be positive");
  if (!(lr_halving_factor > 0.0 && lr_halving_factor < 1.0)) {
    throw ValidationError("train: lr_halving_factor must lie in (0, 1)");
  }
  if (batch_size < 2) throw ValidationError("train: batch_size must be at least 2");
  const auto& w = loss.weights;
  if (w.alpha < 0.0 || w.beta < 0.0 || w.gamma < 0.0) throw ValidationError("train: loss weights must be non-negative");
  if (!(loss.softmax_temperature > 0.0)) throw ValidationError("train: softmax_temperature must be positive");
}

TrainConfig train_config_from(const config::Config& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.get_double("train.learning_rate");
  t.max_epochs = cfg.get_uint("train.max_epochs");
  t.plateau_patience = cfg.get_uint("train.plateau_patience");
  t.lr_halving_factor = cfg.get_double("train.lr_halving_factor");
  t.batch_size = cfg.get_uint("train.batch_size");
  t.seed = cfg.get_uint("train.seed");
  t.loss = config::loss_options_from(cfg);
  t.stop_gradient_neutral = cfg.get_bool("loss.stop_gradient_neutral");
  const auto& select = cfg.get("train.select_by");
  if (select == "uar") {
    t.select_by = SelectBy::kUar;
  } else if (select == "loss") {
    t.select_by = SelectBy::kLoss;
  } else {
    throw ValidationError("config: train.select_by must be 'uar' or 'loss', got '" + select + "'");
  }
  t.checkpoint_dir = cfg.get("train.checkpoint_dir");
  t.save_epoch_checkpoints = cfg.get_bool("train.save_epoch_checkpoints");
  t.validate();
  return t;
}

std::string epoch_log_csv(const std::vector<EpochLog>& rows) {
  std::ostringstream out;
  out << kEpochLogHeader << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.split << ',' << fmt(r.loss.total) << ',' << fmt(r.loss.task) << ','
        << fmt(r.loss.orth) << ',' << fmt(r.loss.recon) << ',' << fmt(r.loss.calib) << ',' << fmt(r.uar) << ','
        << fmt(r.lr) << '\n';
  }
  return out.str();
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << epoch_log_csv(rows);
}

std::filesystem::path meta_path_for(const std::filesystem::path& ckpt_path) {
  return std::filesystem::path(ckpt_path.string() + ".json");
}

void write_checkpoint_meta(const std::filesystem::path& ckpt_path, const CheckpointMeta& meta) {
  json j{{"profile", meta.profile},        {"model_hash", meta.model_hash}, {"config_hash", meta.config_hash}, {"model_config", meta.model_config},
         {"epoch", meta.epoch},           {"val_uar", meta.val_uar},         {"val_loss", meta.val_loss}};
  const auto path = meta_path_for(ckpt_path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& ckpt_path) {
  const auto path = meta_path_for(ckpt_path);
  std::ifstream in(path);
  if (!in) throw IoError("missing checkpoint metadata " + path.string());
  try {
    const json j = json::parse(in);
    CheckpointMeta meta;
    meta.profile = j.value("profile", std::string("full"));
    meta.model_hash = j.at("model_hash").get<std::string>();
    meta.config_hash = j.at("config_hash").get<std::string>();
    meta.model_config = j.at("model_config").get<std::string>();
    meta.epoch = j.at("epoch").get<std::size_t>();
    meta.val_uar = j.at("val_uar").get<double>();
    meta.val_loss = j.at("val_loss").get<double>();
    return meta;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint metadata " + path.string() + ": " + e.what());
  }
}

std::vector<std::vector<std::size_t>> eval_chunks(std::size_t n, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    std::vector<std::size_t> chunk;
    for (std::size_t j = i; j < std::min(n, i + batch_size); ++j) chunk.push_back(j);
    out.push_back(std::move(chunk));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& probs) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  const auto p = probs.data();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (p[i * k + c] > p[i * k + best]) best = c;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

Evaluation evaluate_split(model::DsNet& model, const std::vector<UtteranceRecord>& records,
                          const data::NeutralReferenceMap* neutral, data::FeatureStore& store,
                          const TrainConfig& config) {
  if (records.empty()) throw ValidationError("evaluate: empty split");
  const ops::Mode previous = model.mode();
  model.set_mode(ops::Mode::kEval);
  LossAccumulator acc;
  std::vector<int> truth, pred;
  for (const auto& chunk : eval_chunks(records.size(), config.batch_size)) {
    const data::Batch batch = data::assemble_batch(records, chunk, store, neutral);
    Graph g(false);
    if (chunk.size() >= 2 || is_baseline(model)) {
      const auto fwd = model.forward_train(g, batch.features, batch.neutral_features, config.stop_gradient_neutral);
      acc.add(losses::total_loss(g, fwd, batch.labels, config.loss), batch.size());
    }
    const auto p = argmax_rows(model.forward_infer(g, batch.features));
    truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
    pred.insert(pred.end(), p.begin(), p.end());
  }
  model.set_mode(previous);
  return {acc.mean(), metrics::uar(truth, pred)};
}

TrainResult train_fold(DsNet& model, const std::vector<UtteranceRecord>& train,
                       const std::vector<UtteranceRecord>& val, const TrainConfig& config, data::FeatureStore& store,
                       const config::Config* provenance) {
  return run(model, train, val, config, store, provenance);
}

TrainResult train_baseline(DsNet& model, const std::vector<UtteranceRecord>& train,
                           const std::vector<UtteranceRecord>& val, const TrainConfig& config,
                           data::FeatureStore& store, const config::Config* provenance) {
  if (!is_baseline(model)) throw ValidationError("train_baseline: model variant must be baseline");
  return run(model, train, val, config, store, provenance);
}

}  // namespace dsnet::train
