#include "dsnet/model.hpp"

#include <cmath>
#include <map>

#include "dsnet/error.hpp"

namespace dsnet::model {
namespace {

using ops::Mode;

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return Linear{kaiming_uniform({in, out}, in, rng), Tensor::zeros({out}, true)};
}

BatchNorm make_bn(std::size_t channels, const ModelConfig& c) {
  BatchNorm bn;
  bn.scale = Tensor::full({channels}, 1.0, true);
  bn.shift = Tensor::zeros({channels}, true);
  bn.stats.running_mean = Tensor::zeros({channels});
  bn.stats.running_var = Tensor::full({channels}, 1.0);
  bn.stats.momentum = c.bn_momentum;
  bn.stats.eps = c.bn_eps;
  return bn;
}

AttentionBlock make_block(std::size_t dim, std::size_t bottleneck, std::mt19937_64& rng) {
  AttentionBlock b;
  b.squeeze = make_linear(dim, bottleneck, rng);
  b.excite = make_linear(bottleneck, dim, rng);
  b.out = make_linear(dim, dim, rng);
  return b;
}

Tensor apply(Graph& g, const Linear& l, const Tensor& x) { return ops::affine(g, x, l.weight, l.bias); }

void push_linear(std::vector<NamedTensor>& out, const std::string& prefix, const Linear& l) {
  out.push_back({prefix + ".weight", l.weight});
  out.push_back({prefix + ".bias", l.bias});
}

void push_blocks(std::vector<NamedTensor>& out, const std::string& prefix, const std::vector<AttentionBlock>& blocks) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto p = prefix + ".block" + std::to_string(i);
    push_linear(out, p + ".squeeze", blocks[i].squeeze);
    push_linear(out, p + ".excite", blocks[i].excite);
    push_linear(out, p + ".out", blocks[i].out);
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (input_channels == 0) throw ValidationError("model: input_channels must be positive");
  if (conv_channels.empty()) throw ValidationError("model: conv_channels must not be empty");
  for (auto c : conv_channels) {
    if (c == 0) throw ValidationError("model: conv channel counts must be positive");
  }
  if (kernel == 0 || kernel % 2 == 0) throw ValidationError("model: kernel must be odd");
  if (projector_bottleneck == 0 || projector_blocks == 0 || restorer_hidden == 0 || classifier_hidden == 0) {
    throw ValidationError("model: layer widths and block count must be positive");
  }
  if (num_classes < 2) throw ValidationError("model: need at least two classes");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must lie in [0, 1)");
}

std::string variant_name(Variant v) { return v == Variant::kDsnet ? "dsnet" : "baseline"; }

Variant parse_variant(const std::string& name) {
  if (name == "dsnet") return Variant::kDsnet;
  if (name == "baseline") return Variant::kBaseline;
  throw ValidationError("unknown model variant '" + name + "' (expected dsnet or baseline)");
}

DsNet::DsNet(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  dropout_rng_.seed(seed ^ 0xd1b54a32d192ed03ULL);
  const std::size_t k = config_.kernel;
  std::size_t in = config_.input_channels;
  for (std::size_t out : config_.conv_channels) {
    convs_.push_back(Conv{kaiming_uniform({out, in, k, k}, in * k * k, rng), Tensor::zeros({out}, true)});
    conv_bns_.push_back(make_bn(out, config_));
    in = out;
  }
  const std::size_t d = config_.embedding_dim();
  att_score_hidden_ = make_linear(d, d, rng);
  att_score_out_ = make_linear(d, d, rng);
  if (config_.variant == Variant::kDsnet) {
    for (std::size_t i = 0; i < config_.projector_blocks; ++i) {
      proj_er_.push_back(make_block(d, config_.projector_bottleneck, rng));
    }
    for (std::size_t i = 0; i < config_.projector_blocks; ++i) {
      proj_ei_.push_back(make_block(d, config_.projector_bottleneck, rng));
    }
    restorer_hidden_ = make_linear(2 * d, config_.restorer_hidden, rng);
    restorer_out_ = make_linear(config_.restorer_hidden, d, rng);
  }
  cls_hidden_ = make_linear(d, config_.classifier_hidden, rng);
  cls_bn_ = make_bn(config_.classifier_hidden, config_);
  cls_out_ = make_linear(config_.classifier_hidden, config_.num_classes, rng);
}

Tensor DsNet::encode(Graph& g, const Tensor& x, ShapeTrace* trace) {
  if (x.rank() != 4 || x.dim(1) != config_.input_channels) {
    throw ShapeError("encode: expected N×" + std::to_string(config_.input_channels) + "×T×F input, got " +
                     shape_str(x.shape()));
  }
  const std::size_t pad = config_.kernel / 2;
  Tensor y = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto tag = std::to_string(i + 1);
    y = ops::conv2d(g, y, convs_[i].weight, convs_[i].bias, {pad, pad});
    y = ops::batchnorm(g, y, conv_bns_[i].scale, conv_bns_[i].shift, conv_bns_[i].stats, mode_);
    y = ops::relu(g, y);
    if (trace) trace->emplace_back("conv" + tag, y.shape());
    y = ops::maxpool2d(g, y);
    if (trace) trace->emplace_back("pool" + tag, y.shape());
  }
  y = ops::mean_axis(g, y, 3);
  if (trace) trace->emplace_back("frequency_average_pool", y.shape());
  y = attention_pool(g, y);
  if (trace) trace->emplace_back("temporal_attention_pool", y.shape());
  return y;
}

Tensor DsNet::attention_pool(Graph& g, const Tensor& frames) {
  if (frames.rank() != 3 || frames.dim(1) != config_.embedding_dim()) {
    throw ShapeError("attention_pool: expected N×D×T, got " + shape_str(frames.shape()));
  }
  const std::size_t n = frames.dim(0), d = frames.dim(1), t = frames.dim(2);
  Tensor per_frame = ops::reshape(g, ops::swap_last_axes(g, frames), {n * t, d});
  Tensor hidden = ops::tanh(g, apply(g, att_score_hidden_, per_frame));
  Tensor scores = apply(g, att_score_out_, hidden);
  scores = ops::swap_last_axes(g, ops::reshape(g, scores, {n, t, d}));
  Tensor weights = ops::softmax(g, scores, 2);
  return ops::sum_axis(g, ops::mul(g, weights, frames), 2);
}

Tensor DsNet::attention_block(Graph& g, const Tensor& h, const AttentionBlock& block) {
  Tensor a = ops::sigmoid(g, apply(g, block.excite, ops::relu(g, apply(g, block.squeeze, h))));
  Tensor gated = ops::add(g, ops::mul(g, a, h), h);
  return ops::relu(g, apply(g, block.out, gated));
}

std::pair<Tensor, Tensor> DsNet::project(Graph& g, const Tensor& h) {
  if (config_.variant != Variant::kDsnet) throw Error("project: baseline model has no projectors");
  Tensor z_er = h, z_ei = h;
  for (const auto& b : proj_er_) z_er = attention_block(g, z_er, b);
  for (const auto& b : proj_ei_) z_ei = attention_block(g, z_ei, b);
  return {z_er, z_ei};
}

Tensor DsNet::restore(Graph& g, const Tensor& z_er, const Tensor& z_ei) {
  if (config_.variant != Variant::kDsnet) throw Error("restore: baseline model has no restorer");
  Tensor hidden = ops::relu(g, apply(g, restorer_hidden_, ops::concat_last(g, z_er, z_ei)));
  return apply(g, restorer_out_, hidden);
}

Tensor DsNet::classify(Graph& g, const Tensor& z) {
  Tensor y = apply(g, cls_hidden_, z);
  y = ops::batchnorm(g, y, cls_bn_.scale, cls_bn_.shift, cls_bn_.stats, mode_);
  y = ops::relu(g, y);
  y = ops::dropout(g, y, config_.dropout, mode_, dropout_rng_);
  return ops::softmax(g, apply(g, cls_out_, y), 1);
}

ForwardBundle DsNet::forward_train(Graph& g, const Tensor& x, const Tensor& x_neutral, bool stop_gradient_neutral) {
  ForwardBundle b;
  b.h = encode(g, x);
  if (config_.variant == Variant::kBaseline) {
    b.probs = classify(g, b.h);
    return b;
  }
  if (!x_neutral.defined() || x_neutral.shape() != x.shape()) {
    throw ShapeError("forward_train: neutral batch must match the emotional batch shape");
  }
  if (stop_gradient_neutral) {
    Graph detached(false);
    b.h_n = encode(detached, x_neutral);
  } else {
    b.h_n = encode(g, x_neutral);
  }
  std::tie(b.z_er, b.z_ei) = project(g, b.h);
  b.h_hat = restore(g, b.z_er, b.z_ei);
  b.probs = classify(g, b.z_er);
  return b;
}

Tensor DsNet::forward_infer(Graph& g, const Tensor& x) {
  if (mode_ != Mode::kEval) throw Error("forward_infer requires eval mode");
  Tensor h = encode(g, x);
  if (config_.variant == Variant::kBaseline) return classify(g, h);
  Tensor z = h;
  for (const auto& b : proj_er_) z = attention_block(g, z, b);
  return classify(g, z);
}

std::vector<NamedTensor> DsNet::collect(Phase phase, bool buffers) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto p = "encoder.conv" + std::to_string(i + 1);
    const auto bn = "encoder.bn" + std::to_string(i + 1);
    if (buffers) {
      out.push_back({bn + ".running_mean", conv_bns_[i].stats.running_mean});
      out.push_back({bn + ".running_var", conv_bns_[i].stats.running_var});
    } else {
      out.push_back({p + ".weight", convs_[i].weight});
      out.push_back({p + ".bias", convs_[i].bias});
      out.push_back({bn + ".scale", conv_bns_[i].scale});
      out.push_back({bn + ".shift", conv_bns_[i].shift});
    }
  }
  if (!buffers) {
    push_linear(out, "attention_pool.hidden", att_score_hidden_);
    push_linear(out, "attention_pool.score", att_score_out_);
    if (config_.variant == Variant::kDsnet) {
      push_blocks(out, "projector_er", proj_er_);
      if (phase == Phase::kTrain) {
        push_blocks(out, "projector_ei", proj_ei_);
        push_linear(out, "restorer.hidden", restorer_hidden_);
        push_linear(out, "restorer.out", restorer_out_);
      }
    }
    push_linear(out, "classifier.hidden", cls_hidden_);
    out.push_back({"classifier.bn.scale", cls_bn_.scale});
    out.push_back({"classifier.bn.shift", cls_bn_.shift});
    push_linear(out, "classifier.out", cls_out_);
  } else {
    out.push_back({"classifier.bn.running_mean", cls_bn_.stats.running_mean});
    out.push_back({"classifier.bn.running_var", cls_bn_.stats.running_var});
  }
  return out;
}

std::vector<NamedTensor> DsNet::parameters(Phase phase) const { return collect(phase, false); }
std::vector<NamedTensor> DsNet::buffers(Phase phase) const { return collect(phase, true); }

std::size_t DsNet::parameter_count(Phase phase) const {
  std::size_t n = 0;
  for (const auto& p : parameters(phase)) n += p.tensor.numel();
  return n;
}

void DsNet::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

Checkpoint DsNet::to_checkpoint(Profile profile) const {
  const Phase phase = profile == Profile::kFull ? Phase::kTrain : Phase::kInference;
  Checkpoint ckpt;
  for (const auto& group : {parameters(phase), buffers(phase)}) {
    for (const auto& p : group) {
      const auto d = p.tensor.data();
      ckpt.tensors.push_back({p.name, p.tensor.shape(), std::vector<double>(d.begin(), d.end())});
    }
  }
  return ckpt;
}

void DsNet::load_checkpoint(const Checkpoint& ckpt, Phase phase) {
  for (const auto& group : {parameters(phase), buffers(phase)}) {
    for (auto p : group) {
      const NamedArray* a = ckpt.find(p.name);
      if (!a) throw ValidationError("checkpoint is missing tensor '" + p.name + "'");
      if (a->shape != p.tensor.shape()) {
        throw ShapeError("checkpoint tensor '" + p.name + "' has shape " + shape_str(a->shape) + ", model expects " +
                         shape_str(p.tensor.shape()));
      }
      auto dst = p.tensor.data_mut();
      std::copy(a->values.begin(), a->values.end(), dst.begin());
    }
  }
}

std::vector<NamedArray> DsNet::snapshot() const { return to_checkpoint(Profile::kFull).tensors; }

void DsNet::restore_snapshot(const std::vector<NamedArray>& snap) {
  Checkpoint c;
  c.tensors = snap;
  load_checkpoint(c, Phase::kTrain);
}

}  // namespace dsnet::model
