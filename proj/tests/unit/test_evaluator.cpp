#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "dsnet/config.hpp"
#include "dsnet/error.hpp"
#include "dsnet/evaluator.hpp"
#include "dsnet/metrics.hpp"
#include "dsnet/synth.hpp"
#include "dsnet/trainer.hpp"
#include "support.hpp"

namespace dsnet::eval {
namespace {

using data::UtteranceRecord;

std::vector<UtteranceRecord> fake_records(const std::vector<std::pair<std::string, std::string>>& speaker_session) {
  std::vector<UtteranceRecord> out;
  for (const auto& [spk, ses] : speaker_session) {
    for (int e = 0; e < 4; ++e) {
      UtteranceRecord r;
      r.id = spk + "_" + std::to_string(e);
      r.speaker_id = spk;
      r.session = ses;
      r.emotion = static_cast<data::Emotion>(e);
      out.push_back(r);
    }
  }
  return out;
}

TEST(Folds, SessionPartnerValidatesAndEverySpeakerIsTestedOnce) {
  const auto recs = fake_records({{"a", "s1"}, {"b", "s1"}, {"c", "s2"}, {"d", "s2"}, {"e", "s3"}, {"f", "s3"}});
  const auto folds = loso_folds(recs);
  ASSERT_EQ(folds.size(), 6u);
  std::set<std::string> tested;
  for (const auto& f : folds) {
    tested.insert(f.test_speaker);
    EXPECT_NE(f.test_speaker, f.val_speaker);
  }
  EXPECT_EQ(tested.size(), 6u);
  EXPECT_EQ(folds[0].test_speaker, "a");
  EXPECT_EQ(folds[0].val_speaker, "b");
  EXPECT_EQ(folds[1].val_speaker, "a");
  EXPECT_EQ(folds[4].val_speaker, "f");
}

TEST(Folds, WithoutSessionsTheNextSpeakerValidates) {
  const auto recs = fake_records({{"c", ""}, {"a", ""}, {"b", "x"}});
  const auto folds = loso_folds(recs);
  ASSERT_EQ(folds.size(), 3u);
  EXPECT_EQ(folds[0].test_speaker, "a");
  EXPECT_EQ(folds[0].val_speaker, "b");
  EXPECT_EQ(folds[2].test_speaker, "c");
  EXPECT_EQ(folds[2].val_speaker, "a");
  EXPECT_THROW(loso_folds(fake_records({{"a", ""}, {"b", ""}})), ValidationError);
}

Prediction pred(const std::string& id, int label, int p) {
  Prediction x{id, "s", label, p, {}};
  x.probs[static_cast<std::size_t>(p)] = 1.0;
  return x;
}

TEST(Summary, ConcatenatesRatherThanAveragingFolds) {
  // Fold 1: one angry right. Fold 2: three angry, one right, plus one happy right.
  const std::vector<Prediction> f1{pred("1", 0, 0)};
  const std::vector<Prediction> f2{pred("2", 0, 1), pred("3", 0, 1), pred("4", 0, 0), pred("5", 1, 1)};
  std::vector<Prediction> all = f1;
  all.insert(all.end(), f2.begin(), f2.end());
  const auto s = summarize(all, "h");
  EXPECT_DOUBLE_EQ(s.uar, (2.0 / 4.0 + 1.0) / 2.0);
  const double mean_of_folds = (summarize(f1, "h").uar + summarize(f2, "h").uar) / 2.0;
  EXPECT_NE(s.uar, mean_of_folds);
  EXPECT_EQ(s.count, 5u);
  EXPECT_EQ(s.confusion.counts[0][1], 2);
  EXPECT_EQ(s.per_class_recall[2], -1.0);
}

TEST(Summary, JsonLayout) {
  const auto s = summarize({pred("1", 0, 0), pred("2", 1, 0)}, "abc");
  const std::string j = metrics_json(s);
  EXPECT_LT(j.find("\"uar\""), j.find("\"per_class_recall\""));
  EXPECT_LT(j.find("\"per_class_recall\""), j.find("\"confusion\""));
  EXPECT_LT(j.find("\"confusion\""), j.find("\"count\""));
  EXPECT_LT(j.find("\"count\""), j.find("\"config_hash\""));
  EXPECT_NE(j.find("\"neutral\": null"), std::string::npos);
  EXPECT_NE(j.find("\"abc\""), std::string::npos);
}

TEST(FoldFiles, RoundTripAndAggregate) {
  dsnet::testing::TempDir dir("folds");
  FoldResult a{0, "x", "y", {pred("1", 0, 0), pred("2", 1, 2)}};
  a.predictions[1].probs = {0.125, 0.25, 0.5, 0.125};
  FoldResult b{1, "y", "x", {pred("3", 2, 2)}};
  write_fold_result(dir / "fold_0.jsonl", a);
  write_fold_result(dir / "fold_1.jsonl", b);
  const auto r = read_fold_result(dir / "fold_0.jsonl");
  EXPECT_EQ(r.fold, 0u);
  EXPECT_EQ(r.test_speaker, "x");
  EXPECT_EQ(r.val_speaker, "y");
  ASSERT_EQ(r.predictions.size(), 2u);
  EXPECT_EQ(r.predictions[1].id, "2");
  EXPECT_EQ(r.predictions[1].pred, 2);
  EXPECT_EQ(r.predictions[1].probs, a.predictions[1].probs);

  std::vector<Prediction> all = a.predictions;
  all.push_back(b.predictions[0]);
  EXPECT_EQ(metrics_json(aggregate_folds(dir.path(), "h")), metrics_json(summarize(all, "h")));
  std::ofstream(dir / "fold_2.jsonl") << "{\"fold\": 2}\n";
  EXPECT_THROW(aggregate_folds(dir.path(), "h"), IoError);
  dsnet::testing::TempDir empty("empty");
  EXPECT_THROW(aggregate_folds(empty.path(), "h"), IoError);
}

config::Config tiny_config(std::size_t epochs) {
  config::Config c;
  c.merge({{"model.conv_channels", "2,4,4,8"},
           {"model.kernel", "3"},
           {"model.projector_bottleneck", "4"},
           {"model.restorer_hidden", "8"},
           {"model.classifier_hidden", "6"},
           {"model.dropout", "0.1"},
           {"train.batch_size", "8"},
           {"train.max_epochs", std::to_string(epochs)},
           {"train.seed", "4"}});
  return c;
}

class EvaluatorCorpus : public ::testing::Test {
 protected:
  void SetUp() override {
    data::SynthOptions o;
    o.num_speakers = 4;
    o.utts_per_speaker = 8;
    o.frames = 16;
    o.bins = 16;
    o.seed = 21;
    records_ = data::synth_corpus(o, dir_ / "corpus");
  }
  dsnet::testing::TempDir dir_{"evaluator"};
  std::vector<UtteranceRecord> records_;
};

TEST_F(EvaluatorCorpus, LosoPredictsEveryUtteranceOnceAndIsReproducible) {
  const auto r1 = loso_cv(records_, {tiny_config(1), dir_ / "loso1", 1});
  ASSERT_EQ(r1.folds.size(), 4u);
  std::multiset<std::string> seen;
  for (const auto& f : r1.folds) {
    for (const auto& p : f.predictions) {
      seen.insert(p.id);
      EXPECT_EQ(p.speaker, f.test_speaker);
    }
  }
  EXPECT_EQ(seen.size(), records_.size());
  for (const auto& r : records_) EXPECT_EQ(seen.count(r.id), 1u) << r.id;
  EXPECT_EQ(r1.summary.count, records_.size());

  std::ifstream in(dir_ / "loso1" / "metrics.json");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), metrics_json(r1.summary));
  EXPECT_EQ(metrics_json(aggregate_folds(dir_ / "loso1", r1.summary.config_hash)), ss.str());
  EXPECT_TRUE(std::filesystem::exists(dir_ / "loso1" / "fold_3" / "best.ckpt"));

  const auto r2 = loso_cv(records_, {tiny_config(1), dir_ / "loso2", 2});
  EXPECT_EQ(metrics_json(r2.summary), metrics_json(r1.summary));
}

TEST_F(EvaluatorCorpus, LosoRejectsAFoldMissingAClass) {
  std::vector<UtteranceRecord> partial;
  for (const auto& r : records_) {
    if (r.emotion == data::Emotion::kSad && r.speaker_id != "spk00") continue;
    partial.push_back(r);
  }
  EXPECT_THROW(loso_cv(partial, {tiny_config(1), dir_ / "bad", 1}), ValidationError);
}

TEST_F(EvaluatorCorpus, CrossCorpusAveragesCheckpoints) {
  const auto cfg = tiny_config(1);
  train::TrainConfig tc = train::train_config_from(cfg);
  tc.checkpoint_dir = dir_ / "run";
  model::DsNet net(config::model_config_from(cfg), 1);
  std::vector<UtteranceRecord> train, val;
  for (const auto& r : records_) (r.speaker_id == "spk03" ? val : train).push_back(r);
  data::FeatureStore store;
  const auto result = train::train_fold(net, train, val, tc, store, &cfg);

  const auto single = cross_corpus_eval({result.best_checkpoint}, records_, store);
  std::vector<int> truth, pred;
  for (const auto& p : predict(net, records_, store)) {
    truth.push_back(p.label);
    pred.push_back(p.pred);
  }
  ASSERT_EQ(single.uars.size(), 1u);
  EXPECT_NEAR(single.mean, metrics::uar(truth, pred), 0.1);  // checkpoint holds float32 weights
  EXPECT_EQ(single.model_hash, config::model_hash(cfg));

  const auto triple = cross_corpus_eval({result.best_checkpoint, result.best_checkpoint, result.best_checkpoint},
                                        records_, store);
  EXPECT_EQ(triple.mean, single.mean);
  EXPECT_EQ(triple.stddev, 0.0);

  auto other_cfg = cfg;
  other_cfg.set("model.dropout", "0.2");
  model::DsNet other(config::model_config_from(other_cfg), 2);
  tc.checkpoint_dir = dir_ / "other";
  const auto other_result = train::train_fold(other, train, val, tc, store, &other_cfg);
  try {
    cross_corpus_eval({result.best_checkpoint, other_result.best_checkpoint}, records_, store);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("config hash mismatch"), std::string::npos);
  }
  EXPECT_THROW(cross_corpus_eval({}, records_, store), ValidationError);

  const auto loaded = load_model(result.best_checkpoint);
  EXPECT_EQ(loaded.model->mode(), ops::Mode::kEval);
  EXPECT_EQ(loaded.model_hash, single.model_hash);
}

TEST_F(EvaluatorCorpus, EmbeddingExportLayoutAndScores) {
  const auto cfg = tiny_config(1);
  model::DsNet net(config::model_config_from(cfg), 3);
  data::FeatureStore store;
  export_embeddings(net, records_, store, dir_ / "emb.csv", {{records_[0].id, "test"}});
  std::ifstream in(dir_ / "emb.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  const auto columns = std::count(header.begin(), header.end(), ',') + 1;
  EXPECT_EQ(columns, 4 + 3 * 8);
  EXPECT_TRUE(header.starts_with("id,speaker,label,split,h_0,"));
  EXPECT_NE(header.find(",zer_0,"), std::string::npos);
  EXPECT_NE(header.find(",zei_7"), std::string::npos);
  EXPECT_TRUE(first.starts_with(records_[0].id + ",spk00,angry,test,"));
  std::size_t rows = 1;
  std::string line;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, records_.size());

  // Scores agree with silhouettes computed from the same model directly.
  net.set_mode(ops::Mode::kEval);
  std::vector<double> zer, zei;
  std::vector<int> emo, spk;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto b = data::assemble_batch(records_, {i}, store, nullptr);
    Graph g(false);
    const auto [a, c] = net.project(g, net.encode(g, b.features));
    zer.insert(zer.end(), a.data().begin(), a.data().end());
    zei.insert(zei.end(), c.data().begin(), c.data().end());
    emo.push_back(records_[i].label());
    spk.push_back(records_[i].speaker_id.back() - '0');
  }
  const auto s = subspace_cluster_scores(dir_ / "emb.csv");
  EXPECT_NEAR(s.emotion_zer, metrics::silhouette(zer, 8, emo), 1e-9);
  EXPECT_NEAR(s.emotion_zei, metrics::silhouette(zei, 8, emo), 1e-9);
  EXPECT_NEAR(s.speaker_zer, metrics::silhouette(zer, 8, spk), 1e-9);
  EXPECT_NEAR(s.speaker_zei, metrics::silhouette(zei, 8, spk), 1e-9);

  auto base_cfg = cfg;
  base_cfg.set("model.variant", "baseline");
  model::DsNet base(config::model_config_from(base_cfg), 3);
  EXPECT_THROW(export_embeddings(base, records_, store, dir_ / "b.csv"), ValidationError);
}

TEST(ClusterScores, Errors) {
  dsnet::testing::TempDir dir("scores");
  std::ofstream(dir / "bad.csv") << "id,speaker,label,split,h_0\n";
  EXPECT_THROW(subspace_cluster_scores(dir / "bad.csv"), ValidationError);
  std::ofstream(dir / "one.csv") << "id,speaker,label,split,h_0,zer_0,zei_0\na,s,angry,all,0,0,0\nb,s,angry,all,1,1,1\n";
  EXPECT_THROW(subspace_cluster_scores(dir / "one.csv"), ValidationError);
  EXPECT_THROW(subspace_cluster_scores(dir / "missing.csv"), IoError);
}

}  // namespace
}  // namespace dsnet::eval
