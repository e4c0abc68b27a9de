#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dsnet/checkpoint.hpp"
#include "dsnet/graph.hpp"
#include "dsnet/ops.hpp"

namespace dsnet::model {

enum class Variant {
  kDsnet,     // encoder, twin projectors, restorer, classifier on z_er
  kBaseline,  // encoder and classifier on h
};

enum class Phase { kTrain, kInference };

// Checkpoint contents: everything, or only what inference executes.
enum class Profile { kFull, kDeploy };

struct ModelConfig {
  std::size_t input_channels = 3;
  std::vector<std::size_t> conv_channels{32, 64, 128, 256};
  std::size_t kernel = 5;
  std::size_t projector_bottleneck = 64;
  std::size_t projector_blocks = 1;
  std::size_t restorer_hidden = 256;
  std::size_t classifier_hidden = 64;
  std::size_t num_classes = 4;
  double dropout = 0.5;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  Variant variant = Variant::kDsnet;

  std::size_t embedding_dim() const { return conv_channels.back(); }
  void validate() const;
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ForwardBundle {
  Tensor h;       // N×D
  Tensor h_n;     // N×D, neutral branch through the same encoder
  Tensor z_er;    // N×D
  Tensor z_ei;    // N×D
  Tensor h_hat;   // N×D
  Tensor probs;   // N×classes
};

// (stage name, output shape) pairs recorded by encode().
using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

struct Linear {
  Tensor weight;  // in×out
  Tensor bias;
};

struct Conv {
  Tensor weight;  // out×in×k×k
  Tensor bias;
};

struct BatchNorm {
  Tensor scale;
  Tensor shift;
  ops::BatchNormStats stats;
};

// a = sigmoid(fc2(relu(fc1(h)))), z = relu(fc3(a∘h + h))
struct AttentionBlock {
  Linear squeeze;
  Linear excite;
  Linear out;
};

/// DSNet: a CNN encoder with frequency average pooling and temporal
/// attention pooling, two attention-block projectors, an MLP restorer and an
/// MLP classifier. The encoder is shared between the emotional and neutral
/// branches.
class DsNet {
 public:
  DsNet(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ops::Mode mode() const { return mode_; }
  void set_mode(ops::Mode mode) { mode_ = mode; }
  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  Tensor encode(Graph& g, const Tensor& x, ShapeTrace* trace = nullptr);
  // N×C×T -> N×C; per-channel softmax over time of W2·tanh(W1·h_t).
  Tensor attention_pool(Graph& g, const Tensor& frames);
  static Tensor attention_block(Graph& g, const Tensor& h, const AttentionBlock& block);
  std::pair<Tensor, Tensor> project(Graph& g, const Tensor& h);
  Tensor restore(Graph& g, const Tensor& z_er, const Tensor& z_ei);
  Tensor classify(Graph& g, const Tensor& z);

  // Training dataflow. With stop_gradient_neutral the neutral branch is a
  // constant target.
  ForwardBundle forward_train(Graph& g, const Tensor& x, const Tensor& x_neutral,
                              bool stop_gradient_neutral = false);
  // Inference dataflow: classify(P_er(encode(x))). Requires eval mode.
  Tensor forward_infer(Graph& g, const Tensor& x);

  // Trainable tensors active in `phase`, in a fixed order.
  std::vector<NamedTensor> parameters(Phase phase = Phase::kTrain) const;
  // Batch-norm running statistics for `phase`.
  std::vector<NamedTensor> buffers(Phase phase = Phase::kTrain) const;
  std::size_t parameter_count(Phase phase = Phase::kTrain) const;
  void zero_grad();

  Checkpoint to_checkpoint(Profile profile = Profile::kFull) const;
  // Copies matching tensors by name. A deploy checkpoint restores only the
  // inference path; missing names in the requested phase are an error.
  void load_checkpoint(const Checkpoint& ckpt, Phase phase = Phase::kTrain);

  // Full-precision copy of parameters and buffers.
  std::vector<NamedArray> snapshot() const;
  void restore_snapshot(const std::vector<NamedArray>& snap);

 private:
  ModelConfig config_;
  ops::Mode mode_ = ops::Mode::kTrain;
  std::mt19937_64 dropout_rng_;

  std::vector<Conv> convs_;
  std::vector<BatchNorm> conv_bns_;
  Linear att_score_hidden_;
  Linear att_score_out_;
  std::vector<AttentionBlock> proj_er_;
  std::vector<AttentionBlock> proj_ei_;
  Linear restorer_hidden_;
  Linear restorer_out_;
  Linear cls_hidden_;
  BatchNorm cls_bn_;
  Linear cls_out_;

  std::vector<NamedTensor> collect(Phase phase, bool buffers) const;
};

}  // namespace dsnet::model
