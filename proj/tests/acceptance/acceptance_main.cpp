// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cli.hpp"
#include "dsnet/complexity.hpp"
#include "dsnet/config.hpp"
#include "dsnet/evaluator.hpp"
#include "dsnet/grad_check.hpp"
#include "dsnet/logging.hpp"
#include "dsnet/losses.hpp"
#include "dsnet/metrics.hpp"
#include "dsnet/model.hpp"
#include "dsnet/ops.hpp"
#include "dsnet/synth.hpp"
#include "dsnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace dsnet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Notes {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) pass_ = false;
    if (!ok || verbose_) lines_.push_back((ok ? "" : "miss: ") + what);
  }
  void note(const std::string& s) { lines_.push_back(s); }
  Outcome done() const {
    std::string d;
    for (const auto& l : lines_) d += (d.empty() ? "" : "; ") + l;
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  bool verbose_ = false;
  std::vector<std::string> lines_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

Tensor rnd(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1, bool grad = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

fs::path scratch_root() {
  const auto p = fs::temp_directory_path() / ("dsnet_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------- 1
Outcome complexity_reconciliation() {
  Notes n;
  model::ModelConfig dsnet;
  model::ModelConfig base;
  base.variant = model::Variant::kBaseline;
  const auto within = [](double got, double want, double tol) { return std::abs(got - want) <= tol * want; };
  const double pb = complexity::count_params(base, model::Phase::kInference);
  const double pi = complexity::count_params(dsnet, model::Phase::kInference);
  const double pt = complexity::count_params(dsnet, model::Phase::kTrain);
  const double mi = complexity::count_macs(dsnet, model::Phase::kInference);
  const double mt = complexity::count_macs(dsnet, model::Phase::kTrain);
  n.check(within(pb, 1.23e6, 0.02), "baseline params " + fmt(pb, 7));
  n.check(within(pi, 1.33e6, 0.02), "inference params " + fmt(pi, 7));
  n.check(within(pt, 1.63e6, 0.02), "train params " + fmt(pt, 7));
  n.check(within(mi, 1.98e9, 0.03), "inference MACs " + fmt(mi, 10));
  n.check(within(mt, 3.95e9, 0.03), "train MACs " + fmt(mt, 10));
  n.note("params " + fmt(pb / 1e6, 3) + "M/" + fmt(pi / 1e6, 3) + "M/" + fmt(pt / 1e6, 3) + "M, MACs " +
         fmt(mi / 1e9, 4) + "G/" + fmt(mt / 1e9, 4) + "G");
  return n.done();
}

// ---------------------------------------------------------------- 2
Outcome hand_values() {
  Notes n;
  Graph g(false);
  const auto near = [&](double got, double want, const std::string& what) {
    n.check(std::abs(got - want) <= 1e-5, what + " " + fmt(got, 8));
  };
  near(losses::orthogonality_loss(g, Tensor({2, 1}, {1, -1}), Tensor({2, 1}, {1, -1})).item(), 4.0, "orth");
  near(losses::reconstruction_loss(g, Tensor({1, 2}, {1, 2}), Tensor::zeros({1, 2})).item(), 5.0, "recon");
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  near(losses::kl_divergence(p, q), 0.14384, "kl");
  near(losses::calibration_loss(g, Tensor({1, 2}, {0, 0}), Tensor({1, 2}, {std::log(2.0), 0})).item(), 0.05776,
       "calib");
  near(losses::task_loss(g, Tensor::full({2, 4}, 0.25), std::vector<int>{0, 3}).item(), std::log(4.0), "ce");
  if (n.done().detail.empty()) n.note("orth 4, recon 5, kl 0.14384, calib 0.05776, ce ln4");
  return n.done();
}

// ---------------------------------------------------------------- 3
bool structurally_zero(const std::string& name, bool train_mode) {
  if (name == "attention_pool.score.bias") return true;
  return train_mode &&
         ((name.starts_with("encoder.conv") && name.ends_with(".bias")) || name == "classifier.hidden.bias");
}

Outcome gradient_integrity() {
  Notes n;
  double worst = 0;
  const auto prim = [&](const std::string& what, const std::function<Tensor(Graph&)>& f, std::vector<Tensor> in) {
    const auto r = grad_check(f, std::move(in));
    worst = std::max(worst, r.max_rel_error);
    n.check(r.max_rel_error < 1e-5, what + " " + fmt(r.max_rel_error, 3));
  };
  const auto bn_stats = [](std::size_t c) {
    return ops::BatchNormStats{Tensor::zeros({c}), Tensor::full({c}, 1.0), 0.1, 1e-5};
  };

  const Tensor x4 = rnd({2, 2, 6, 6}, 1), k = rnd({3, 2, 3, 3}, 2), kb = rnd({3}, 3);
  const Tensor w4 = rnd({2, 3, 6, 6}, 4, -1, 1, false);
  prim("conv2d", [&](Graph& g) { return ops::sum(g, ops::mul(g, ops::conv2d(g, x4, k, kb, {1, 1}), w4)); },
       {x4, k, kb});
  const Tensor xp = rnd({2, 2, 4, 6}, 5);
  prim("maxpool2d", [&](Graph& g) { return ops::square_sum(g, ops::maxpool2d(g, xp)); }, {xp});
  const Tensor xa = rnd({4, 3}, 6), wa = rnd({3, 5}, 7), ba = rnd({5}, 8);
  prim("affine", [&](Graph& g) { return ops::square_sum(g, ops::affine(g, xa, wa, ba)); }, {xa, wa, ba});
  const Tensor ma = rnd({4, 3}, 9), mb = rnd({4, 2}, 10);
  prim("matmul", [&](Graph& g) { return ops::square_sum(g, ops::matmul(g, ma, mb, true)); }, {ma, mb});
  const Tensor xb = rnd({8, 4}, 11), gam = rnd({4}, 12, 0.5, 1.5), bet = rnd({4}, 13);
  const Tensor wb = rnd({8, 4}, 14, -1, 1, false);
  prim("batchnorm",
       [&](Graph& g) {
         auto s = bn_stats(4);
         return ops::sum(g, ops::mul(g, ops::batchnorm(g, xb, gam, bet, s, ops::Mode::kTrain), wb));
       },
       {xb, gam, bet});
  const Tensor xb4 = rnd({3, 2, 3, 4}, 15), gam2 = rnd({2}, 16, 0.5, 1.5), bet2 = rnd({2}, 17);
  const Tensor wb4 = rnd({3, 2, 3, 4}, 18, -1, 1, false);
  prim("batchnorm4d",
       [&](Graph& g) {
         auto s = bn_stats(2);
         return ops::sum(g, ops::mul(g, ops::batchnorm(g, xb4, gam2, bet2, s, ops::Mode::kTrain), wb4));
       },
       {xb4, gam2, bet2});
  const Tensor xr({4}, {-1.5, -0.3, 0.4, 2.0}, true);
  prim("relu", [&](Graph& g) { return ops::square_sum(g, ops::relu(g, xr)); }, {xr});
  const Tensor xt = rnd({10}, 19);
  prim("tanh", [&](Graph& g) { return ops::square_sum(g, ops::tanh(g, xt)); }, {xt});
  prim("sigmoid", [&](Graph& g) { return ops::square_sum(g, ops::sigmoid(g, xt)); }, {xt});
  const Tensor xs = rnd({2, 3, 4}, 20);
  prim("softmax", [&](Graph& g) { return ops::square_sum(g, ops::softmax(g, xs, 1)); }, {xs});
  std::mt19937_64 drop_rng;
  const Tensor xd = rnd({6, 5}, 21);
  prim("dropout",
       [&](Graph& g) {
         drop_rng.seed(3);
         return ops::square_sum(g, ops::dropout(g, xd, 0.3, ops::Mode::kTrain, drop_rng));
       },
       {xd});
  const Tensor ry = rnd({2, 3, 2}, 22), rw = rnd({2, 3}, 23, -1, 1, false);
  prim("reductions",
       [&](Graph& g) {
         const Tensor a = ops::sum_axis(g, xs, 2);
         const Tensor b = ops::mean_axis(g, ops::swap_last_axes(g, xs), 1);
         const Tensor c = ops::concat_last(g, xs, ry);
         return ops::add(g, ops::add(g, ops::sum(g, ops::mul(g, a, rw)), ops::square_sum(g, b)),
                         ops::square_sum(g, ops::scale(g, ops::sub(g, ops::reshape(g, c, {36}), Tensor::full({36}, 0.1)),
                                                       0.7)));
       },
       {xs, ry});
  const Tensor z = rnd({5, 3}, 24), zw = rnd({5, 3}, 25, -1, 1, false);
  prim("zscore", [&](Graph& g) { return ops::sum(g, ops::mul(g, ops::zscore_columns(g, z, 1e-5), zw)); }, {z});
  const Tensor pa = rnd({3, 4}, 26), pb = rnd({3, 4}, 27);
  prim("kl_rows",
       [&](Graph& g) { return ops::sum(g, ops::kl_rows(g, ops::softmax(g, pa, 1), ops::softmax(g, pb, 1), 1e-10)); },
       {pa, pb});
  const std::vector<int> labels3{0, 3, 2};
  prim("nll", [&](Graph& g) { return ops::nll(g, ops::softmax(g, pa, 1), labels3, 1e-10); }, {pa});
  const Tensor la = rnd({5, 4}, 28), lb = rnd({5, 4}, 29);
  prim("orthogonality_loss", [&](Graph& g) { return losses::orthogonality_loss(g, la, lb); }, {la, lb});
  prim("reconstruction_loss", [&](Graph& g) { return losses::reconstruction_loss(g, la, lb); }, {la, lb});
  prim("calibration_loss", [&](Graph& g) { return losses::calibration_loss(g, la, lb); }, {la, lb});
  n.note("primitives max rel " + fmt(worst, 3));

  model::ModelConfig small;
  small.conv_channels = {2, 4, 4, 8};
  small.projector_bottleneck = 4;
  small.restorer_hidden = 8;
  small.classifier_hidden = 6;
  model::DsNet net(small, 3);
  const Tensor x = rnd({2, 3, 40, 16}, 30, -1, 1, false), xn = rnd({2, 3, 40, 16}, 31, -1, 1, false);
  const std::vector<int> labels{1, 3};
  const auto f = [&](Graph& g) {
    net.reseed_dropout(11);
    return losses::total_loss(g, net.forward_train(g, x, xn), labels, {}).total;
  };
  for (bool train : {true, false}) {
    net.set_mode(train ? ops::Mode::kTrain : ops::Mode::kEval);
    std::vector<Tensor> active, zeros;
    for (const auto& p : net.parameters()) (structurally_zero(p.name, train) ? zeros : active).push_back(p.tensor);
    const auto r = grad_check(f, active, {.step = 1e-6, .max_elements_per_input = 6});
    const auto zr = grad_check(f, zeros, {.step = 1e-6, .max_elements_per_input = 0});
    const std::string mode = train ? "train" : "eval";
    n.check(r.max_rel_error < 1e-3, "full model (" + mode + ") max rel " + fmt(r.max_rel_error, 3) + " over " +
                                        std::to_string(r.checked));
    n.check(std::abs(zr.worst_analytic) < 1e-9 && std::abs(zr.worst_numeric) < 1e-6,
            "structural zeros (" + mode + ") analytic " + fmt(zr.worst_analytic, 3));
    if (r.max_rel_error < 1e-3) n.note("full model " + mode + " " + fmt(r.max_rel_error, 3));
  }
  return n.done();
}

// ---------------------------------------------------------------- 4
Outcome shape_trace() {
  Notes n;
  model::DsNet net(model::ModelConfig{}, 1);
  net.set_mode(ops::Mode::kEval);
  const Tensor x = rnd({2, 3, 600, 80}, 40, -1, 1, false), xn = rnd({2, 3, 600, 80}, 41, -1, 1, false);
  model::ShapeTrace trace;
  {
    Graph g(false);
    net.encode(g, x, &trace);
  }
  const model::ShapeTrace expect{{"conv1", {2, 32, 600, 80}},  {"pool1", {2, 32, 300, 40}},
                                 {"conv2", {2, 64, 300, 40}},  {"pool2", {2, 64, 150, 20}},
                                 {"conv3", {2, 128, 150, 20}}, {"pool3", {2, 128, 75, 10}},
                                 {"conv4", {2, 256, 75, 10}},  {"pool4", {2, 256, 37, 5}},
                                 {"frequency_average_pool", {2, 256, 37}},
                                 {"temporal_attention_pool", {2, 256}}};
  n.check(trace == expect, "encoder trace differs from the reference table");
  Graph g(false);
  const Tensor infer = net.forward_infer(g, x);
  const Tensor train = net.forward_train(g, x, xn).probs;
  bool same = infer.shape() == train.shape();
  for (std::size_t i = 0; same && i < infer.numel(); ++i) same = infer.data()[i] == train.data()[i];
  n.check(same, "forward_infer differs from the training head");
  if (trace == expect && same) n.note("10 stages match; inference head bit-identical at 2x3x600x80");
  return n.done();
}

// ---------------------------------------------------------- 5, 6, 7
// Reduced configuration shared by the training criteria.
config::Config reduced_config(std::uint64_t seed, std::size_t epochs) {
  config::Config c;
  c.set("model.conv_channels", "8,16,16,32");
  c.set("model.kernel", "3");
  c.set("model.projector_bottleneck", "8");
  c.set("model.restorer_hidden", "32");
  c.set("model.classifier_hidden", "16");
  c.set("model.dropout", "0.1");
  c.set("train.batch_size", "16");
  c.set("train.learning_rate", "0.001");
  c.set("train.max_epochs", std::to_string(epochs));
  c.set("train.seed", std::to_string(seed));
  c.set("train.save_epoch_checkpoints", "false");
  return c;
}

constexpr std::size_t kFrames = 64;
constexpr std::size_t kBins = 32;

std::vector<data::UtteranceRecord> make_corpus(const fs::path& dir, std::uint64_t seed, double bias,
                                               const std::string& prefix) {
  data::SynthOptions o;
  o.num_speakers = 6;
  o.utts_per_speaker = 40;
  o.seed = seed;
  o.frames = kFrames;
  o.bins = kBins;
  o.speaker_bias_scale = bias;
  o.speaker_prefix = prefix;
  return data::synth_corpus(o, dir);
}

std::vector<data::UtteranceRecord> select(const std::vector<data::UtteranceRecord>& all,
                                          const std::vector<std::string>& speakers, bool exclude) {
  std::vector<data::UtteranceRecord> out;
  for (const auto& r : all) {
    const bool hit = std::find(speakers.begin(), speakers.end(), r.speaker_id) != speakers.end();
    if (hit != exclude) out.push_back(r);
  }
  return out;
}

struct Run {
  std::unique_ptr<model::DsNet> net;
  train::TrainResult result;
  double test_uar = 0;
  std::vector<data::UtteranceRecord> test;
};

Run train_held_out(const std::vector<data::UtteranceRecord>& corpus, const config::Config& cfg,
                   data::FeatureStore& store) {
  const auto plan = eval::loso_folds(corpus).front();
  const auto train_set = select(corpus, {plan.test_speaker, plan.val_speaker}, true);
  const auto val_set = select(corpus, {plan.val_speaker}, false);
  Run r;
  r.test = select(corpus, {plan.test_speaker}, false);
  const auto tc = train::train_config_from(cfg);
  r.net = std::make_unique<model::DsNet>(config::model_config_from(cfg), tc.seed);
  r.result = r.net->config().variant == model::Variant::kBaseline
                 ? train::train_baseline(*r.net, train_set, val_set, tc, store)
                 : train::train_fold(*r.net, train_set, val_set, tc, store);
  r.test_uar = eval::summarize(eval::predict(*r.net, r.test, store, tc.batch_size), "").uar;
  return r;
}

double uar_on(model::DsNet& net, const std::vector<data::UtteranceRecord>& records, data::FeatureStore& store) {
  return eval::summarize(eval::predict(net, records, store, 16), "").uar;
}

struct EndToEnd {
  Outcome convergence;
  Outcome disentanglement;
};

EndToEnd end_to_end(const fs::path& root) {
  Notes c5, c6;
  eval::ClusterScores mean;
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  for (const auto seed : seeds) {
    const auto corpus = make_corpus(root / ("e2e_" + std::to_string(seed)), seed, 1.0, "spk");
    data::FeatureStore store;
    auto run = train_held_out(corpus, reduced_config(seed, 50), store);
    if (seed == seeds.front()) {
      const auto& log = run.result.log;
      const train::EpochLog* first = nullptr;
      const train::EpochLog* last = nullptr;
      for (const auto& row : log) {
        if (row.split != "train") continue;
        if (first == nullptr) first = &row;
        last = &row;
      }
      c5.check(run.test_uar >= 0.90, "held-out UAR " + fmt(run.test_uar, 3) + " (need >= 0.90)");
      const auto ratio = [&](double a, double b) { return b > 0 ? a / b : 0.0; };
      const double ro = ratio(last->loss.orth, first->loss.orth);
      const double rr = ratio(last->loss.recon, first->loss.recon);
      const double rc = ratio(last->loss.calib, first->loss.calib);
      c5.check(ro < 0.2, "L_o ratio " + fmt(ro, 3));
      c5.check(rr < 0.2, "L_r ratio " + fmt(rr, 3));
      c5.check(rc < 0.2, "L_c ratio " + fmt(rc, 3));
      c5.note("epochs " + std::to_string(last->epoch) + ", best val UAR " + fmt(run.result.best_val_uar, 3) +
              ", test UAR " + fmt(run.test_uar, 3) + ", ratios o/r/c " + fmt(ro, 2) + "/" + fmt(rr, 2) + "/" +
              fmt(rc, 2));
    }
    const auto csv = root / ("emb_" + std::to_string(seed) + ".csv");
    eval::export_embeddings(*run.net, corpus, store, csv);
    const auto s = eval::subspace_cluster_scores(csv);
    mean.emotion_zer += s.emotion_zer / seeds.size();
    mean.emotion_zei += s.emotion_zei / seeds.size();
    mean.speaker_zer += s.speaker_zer / seeds.size();
    mean.speaker_zei += s.speaker_zei / seeds.size();
  }
  const double spk = mean.speaker_zei - mean.speaker_zer;
  const double emo = mean.emotion_zer - mean.emotion_zei;
  c6.check(spk > 0.05, "speaker margin (z_ei - z_er) " + fmt(spk, 3));
  c6.check(emo > 0.05, "emotion margin (z_er - z_ei) " + fmt(emo, 3));
  c6.note("speaker z_ei/z_er " + fmt(mean.speaker_zei, 3) + "/" + fmt(mean.speaker_zer, 3) + ", emotion z_er/z_ei " +
          fmt(mean.emotion_zer, 3) + "/" + fmt(mean.emotion_zei, 3));
  return {c5.done(), c6.done()};
}

Outcome ablation_ordering(const fs::path& root) {
  Notes n;
  const std::vector<std::string> variants{"full", "no_orth", "no_recon", "no_calib", "baseline"};
  std::map<std::string, double> within, cross;
  const std::vector<std::uint64_t> seeds{11, 12, 13, 14, 15};
  for (const auto seed : seeds) {
    const auto a = make_corpus(root / ("abl_a_" + std::to_string(seed)), seed, 1.0, "a");
    const auto b = make_corpus(root / ("abl_b_" + std::to_string(seed)), seed + 1000, 2.0, "b");
    data::FeatureStore store;
    for (const auto& v : variants) {
      auto cfg = reduced_config(seed, 30);
      cfg.merge(cli::ablation_preset(v));
      auto run = train_held_out(a, cfg, store);
      within[v] += run.test_uar / seeds.size();
      cross[v] += uar_on(*run.net, b, store) / seeds.size();
    }
  }
  for (const auto& v : {"no_orth", "no_recon", "no_calib"})
    n.check(cross["full"] >= cross[v], std::string("cross full ") + fmt(cross["full"], 3) + " < " + v + " " +
                                           fmt(cross[v], 3));
  n.check(within["full"] >= within["baseline"],
          "within full " + fmt(within["full"], 3) + " < baseline " + fmt(within["baseline"], 3));
  n.check(cross["full"] >= cross["baseline"],
          "cross full " + fmt(cross["full"], 3) + " < baseline " + fmt(cross["baseline"], 3));
  std::string table;
  for (const auto& v : variants) table += (table.empty() ? "" : ", ") + v + " " + fmt(within[v], 3) + "/" + fmt(cross[v], 3);
  n.note("within/cross: " + table);
  return n.done();
}

// ---------------------------------------------------------------- 8
Outcome metric_oracle() {
  Notes n;
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t len = 1 + rng() % 60;
    std::vector<int> truth(len), pred(len);
    for (std::size_t i = 0; i < len; ++i) {
      truth[i] = static_cast<int>(rng() % 4);
      pred[i] = static_cast<int>(rng() % 4);
    }
    long counts[4][4] = {};
    for (std::size_t i = 0; i < len; ++i) ++counts[truth[i]][pred[i]];
    double sum = 0;
    int present = 0;
    for (int c = 0; c < 4; ++c) {
      long support = 0;
      for (int p = 0; p < 4; ++p) support += counts[c][p];
      if (support == 0) continue;
      sum += static_cast<double>(counts[c][c]) / static_cast<double>(support);
      ++present;
    }
    const double want = sum / present;
    const auto cm = metrics::confusion(truth, pred);
    bool same = metrics::uar(truth, pred) == want;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) same = same && cm.counts[r][c] == counts[r][c];
    if (!same) ++mismatches;
  }
  n.check(mismatches == 0, std::to_string(mismatches) + " of 1000 sets differ");
  if (mismatches == 0) n.note("1000 sets exact");
  return n.done();
}

// ---------------------------------------------------------------- 9
Outcome determinism(const fs::path& root) {
  Notes n;
  make_corpus(root / "det", 21, 1.0, "spk");
  const auto manifest = (root / "det" / "manifest.jsonl").string();
  std::vector<std::string> outputs;
  for (const char* name : {"loso_a", "loso_b"}) {
    std::ostringstream out, err;
    const auto cfg = reduced_config(7, 3).dump();
    std::vector<std::string> args{"--log-level", "warn", "--seed", "7"};
    std::istringstream lines(cfg);
    for (std::string line; std::getline(lines, line);) {
      if (line.starts_with("model.") || line.starts_with("train.max_epochs") || line.starts_with("train.batch"))
        args.insert(args.end(), {"--set", line});
    }
    args.insert(args.end(), {"loso", "--manifest", manifest, "--out-dir", (root / name).string()});
    const int code = cli::run(args, out, err);
    n.check(code == 0, std::string(name) + " exited " + std::to_string(code) + ": " + err.str());
    std::ifstream in(root / name / "metrics.json", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    outputs.push_back(ss.str());
  }
  n.check(!outputs[0].empty() && outputs[0] == outputs[1], "metrics.json differs between runs");
  if (!outputs[0].empty() && outputs[0] == outputs[1]) n.note(std::to_string(outputs[0].size()) + " identical bytes");
  return n.done();
}

}  // namespace

int main() {
  dsnet::log::set_level("warn");
  const auto root = scratch_root();
  std::map<int, Outcome> results;
  const auto timed = [&](int id, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.detail += " [" + fmt(s, 3) + " s]";
    results[id] = o;
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };
  timed(1, complexity_reconciliation);
  timed(2, hand_values);
  timed(3, gradient_integrity);
  timed(4, shape_trace);
  EndToEnd e2e;
  timed(5, [&] {
    e2e = end_to_end(root);
    return e2e.convergence;
  });
  timed(6, [&] { return e2e.disentanglement; });
  timed(7, [&] { return ablation_ordering(root); });
  timed(8, metric_oracle);
  timed(9, [&] { return determinism(root); });
  std::error_code ec;
  fs::remove_all(root, ec);
  int failed = 0;
  for (const auto& [id, o] : results) failed += o.pass ? 0 : 1;
  std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed == 0 ? 0 : 1;
}
