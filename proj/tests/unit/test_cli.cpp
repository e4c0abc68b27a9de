#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

namespace dsnet::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.insert(args.begin(), {"--log-level", "warn"});
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

TEST(Cli, SynthIsDeterministic) {
  dsnet::testing::TempDir dir("cli_synth");
  const std::vector<std::string> common{"--speakers", "3", "--per-speaker", "8", "--frames", "12", "--bins", "8"};
  for (const char* name : {"a", "b"}) {
    std::vector<std::string> args{"--seed", "7", "synth", "--out", (dir / name).string()};
    args.insert(args.end(), common.begin(), common.end());
    ASSERT_EQ(call(args).code, 0);
  }
  auto a = tree(dir / "a"), b = tree(dir / "b");
  ASSERT_EQ(a.size(), 3u * 8u + 2u);
  // run.json records the invocation, whose output path necessarily differs.
  const auto ra = nlohmann::json::parse(a.at("run.json")), rb = nlohmann::json::parse(b.at("run.json"));
  EXPECT_EQ(ra.at("config_hash"), rb.at("config_hash"));
  EXPECT_EQ(ra.at("seed"), 7);
  a.erase("run.json");
  b.erase("run.json");
  EXPECT_EQ(a, b);

  std::vector<std::string> other{"--seed", "8", "synth", "--out", (dir / "c").string()};
  other.insert(other.end(), common.begin(), common.end());
  ASSERT_EQ(call(other).code, 0);
  auto c = tree(dir / "c");
  c.erase("run.json");
  EXPECT_NE(a, c);
}

TEST(Cli, ComplexityReportsTheInferenceCount) {
  dsnet::testing::TempDir dir("cli_complexity");
  const auto r = call({"complexity", "--phase", "inference", "--out-dir", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1326340"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "complexity.json"));
  EXPECT_EQ(j.at("params"), 1326340);
  EXPECT_EQ(j.at("phase"), "inference");
  const auto t = call({"complexity", "--phase", "train", "--out-dir", dir.path().string()});
  EXPECT_NE(t.out.find("1622340"), std::string::npos);
  const auto b = call({"complexity", "--preset", "baseline", "--out-dir", dir.path().string()});
  EXPECT_NE(b.out.find("1227460"), std::string::npos);
  EXPECT_EQ(call({"complexity", "--phase", "deploy", "--out-dir", dir.path().string()}).code, 1);
}

TEST(Cli, MissingManifestIsAValidationError) {
  dsnet::testing::TempDir dir("cli_missing");
  const std::string path = (dir / "nope.jsonl").string();
  const auto r = call({"train", "--manifest", path, "--out-dir", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(path), std::string::npos);
  const auto run_json = nlohmann::json::parse(slurp(dir / "run.json"));
  EXPECT_EQ(run_json.at("status"), 1);
  EXPECT_NE(run_json.at("error").get<std::string>().find("manifest not found"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(call({}).code, 1);
  EXPECT_EQ(call({"frobnicate"}).code, 1);
  EXPECT_EQ(call({"train"}).code, 1);
  EXPECT_EQ(call({"--help"}).code, 0);
  dsnet::testing::TempDir dir("cli_usage");
  EXPECT_EQ(call({"--set", "train.momentum=1", "complexity", "--out-dir", dir.path().string()}).code, 1);
  EXPECT_EQ(call({"--set", "novalue", "complexity", "--out-dir", dir.path().string()}).code, 1);
  EXPECT_EQ(call({"complexity", "--preset", "tiny", "--out-dir", dir.path().string()}).code, 1);
  EXPECT_EQ(call({"--config", (dir / "none.cfg").string(), "complexity", "--out-dir", dir.path().string()}).code, 1);
}

TEST(Cli, SeedPrecedence) {
  dsnet::testing::TempDir dir("cli_seed");
  auto seed_of = [&](std::vector<std::string> args) {
    args.insert(args.end(), {"complexity", "--out-dir", dir.path().string()});
    EXPECT_EQ(call(args).code, 0);
    return nlohmann::json::parse(slurp(dir / "run.json")).at("seed").get<int>();
  };
  std::ofstream(dir / "s.cfg") << "train.seed=5\n";
  ::setenv("DSNET_SEED", "9", 1);
  EXPECT_EQ(seed_of({}), 9);
  EXPECT_EQ(seed_of({"--config", (dir / "s.cfg").string()}), 5);
  EXPECT_EQ(seed_of({"--set", "train.seed=6"}), 6);
  EXPECT_EQ(seed_of({"--seed", "3", "--set", "train.seed=6"}), 3);
  ::unsetenv("DSNET_SEED");
  EXPECT_EQ(seed_of({}), 0);
}

TEST(Cli, Presets) {
  EXPECT_EQ(ablation_preset("no_calib").at("loss.gamma"), "0");
  EXPECT_EQ(ablation_preset("no_orth").at("loss.alpha"), "0");
  EXPECT_EQ(ablation_preset("no_recon").at("loss.beta"), "0");
  EXPECT_EQ(ablation_preset("full").at("loss.alpha"), "1");
  EXPECT_EQ(ablation_preset("baseline").at("model.variant"), "baseline");
  EXPECT_EQ(preset_names().size(), 5u);
  for (const auto& p : preset_names()) EXPECT_NO_THROW(ablation_preset(p));
}

TEST(Cli, TrainEvalExportRoundTrip) {
  dsnet::testing::TempDir dir("cli_flow");
  const std::string corpus = (dir / "corpus").string();
  ASSERT_EQ(call({"--seed", "2", "synth", "--out", corpus, "--speakers", "4", "--per-speaker", "8", "--frames", "16",
                  "--bins", "16"})
                .code,
            0);
  const std::vector<std::string> small{"--set", "model.conv_channels=2,4,4,8", "--set", "model.kernel=3",
                                       "--set", "model.projector_bottleneck=4", "--set", "model.restorer_hidden=8",
                                       "--set", "model.classifier_hidden=6", "--set", "train.batch_size=8"};
  auto with = [&](std::vector<std::string> tail) {
    std::vector<std::string> args = small;
    args.insert(args.end(), tail.begin(), tail.end());
    return call(args);
  };
  const std::string manifest = corpus + "/manifest.jsonl";
  const std::string out = (dir / "train").string();
  const auto t = with({"train", "--manifest", manifest, "--out-dir", out, "--epochs", "2"});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"best.ckpt", "best.ckpt.json", "epoch_2.ckpt", "epochs.csv", "predictions.jsonl",
                        "metrics.json", "run.json"})
    EXPECT_TRUE(fs::exists(dir / "train" / f)) << f;
  const auto run_json = nlohmann::json::parse(slurp(dir / "train" / "run.json"));
  EXPECT_EQ(run_json.at("status"), 0);
  EXPECT_EQ(run_json.at("config").at("train.max_epochs"), "2");

  const std::string ckpt = out + "/best.ckpt";
  const auto e = with({"eval", "--checkpoint", ckpt, "--manifest", manifest, "--out-dir", (dir / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("32 predictions"), std::string::npos);

  const auto x = with({"cross-eval", "--checkpoint", ckpt, "--checkpoint", ckpt, "--manifest", manifest, "--out-dir",
                       (dir / "cross").string()});
  ASSERT_EQ(x.code, 0) << x.err;
  const auto cj = nlohmann::json::parse(slurp(dir / "cross" / "cross_corpus.json"));
  EXPECT_EQ(cj.at("uars").size(), 2u);
  EXPECT_EQ(cj.at("std"), 0.0);

  const auto ex = with({"export-embeddings", "--checkpoint", ckpt, "--manifest", manifest, "--out-dir",
                        (dir / "emb").string()});
  ASSERT_EQ(ex.code, 0) << ex.err;
  EXPECT_TRUE(fs::exists(dir / "emb" / "embeddings.csv"));
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir / "emb" / "silhouette.json")).contains("speaker_zei"));

  const auto bad = with({"train", "--manifest", manifest, "--out-dir", out, "--test-speaker", "nobody"});
  EXPECT_EQ(bad.code, 1);
}

}  // namespace
}  // namespace dsnet::cli
