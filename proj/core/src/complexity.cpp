#include "dsnet/complexity.hpp"

#include <json.hpp>

#include "dsnet/error.hpp"

namespace dsnet::complexity {
namespace {

using model::ModelConfig;
using model::Phase;
using model::Variant;

std::uint64_t linear_params(std::uint64_t in, std::uint64_t out) { return in * out + out; }

std::uint64_t projector_params(const ModelConfig& c) {
  const std::uint64_t d = c.embedding_dim(), b = c.projector_bottleneck;
  return c.projector_blocks * (linear_params(d, b) + linear_params(b, d) + linear_params(d, d));
}

std::uint64_t projector_macs(const ModelConfig& c) {
  const std::uint64_t d = c.embedding_dim(), b = c.projector_bottleneck;
  return c.projector_blocks * (d * b + b * d + d * d);
}

std::uint64_t classifier_params(const ModelConfig& c) {
  const std::uint64_t d = c.embedding_dim(), h = c.classifier_hidden;
  return linear_params(d, h) + 2 * h + linear_params(h, c.num_classes);
}

struct EncoderCost {
  std::uint64_t macs = 0;
  std::size_t frames_out = 0;
};

EncoderCost encoder_macs(const ModelConfig& c, std::size_t frames, std::size_t bins) {
  EncoderCost cost;
  std::uint64_t in = c.input_channels;
  std::size_t t = frames, f = bins;
  const std::uint64_t k2 = c.kernel * c.kernel;
  for (std::size_t out : c.conv_channels) {
    if (t < 2 || f < 2) throw ValidationError("count_macs: input too small for the encoder");
    cost.macs += in * out * k2 * t * f;
    in = out;
    t /= 2;
    f /= 2;
  }
  cost.frames_out = t;
  return cost;
}

}  // namespace

std::string phase_name(Phase phase) { return phase == Phase::kTrain ? "train" : "inference"; }

Phase parse_phase(const std::string& name) {
  if (name == "train") return Phase::kTrain;
  if (name == "inference") return Phase::kInference;
  throw ValidationError("unknown phase '" + name + "' (expected train or inference)");
}

std::uint64_t count_params(const ModelConfig& c, Phase phase) {
  c.validate();
  std::uint64_t n = 0;
  std::uint64_t in = c.input_channels;
  for (std::size_t out : c.conv_channels) {
    n += in * out * c.kernel * c.kernel + out + 2 * out;
    in = out;
  }
  const std::uint64_t d = c.embedding_dim();
  n += 2 * linear_params(d, d);
  n += classifier_params(c);
  if (c.variant == Variant::kBaseline) return n;
  n += projector_params(c);
  if (phase == Phase::kTrain) n += projector_params(c) + linear_params(2 * d, c.restorer_hidden) +
                                   linear_params(c.restorer_hidden, d);
  return n;
}

std::uint64_t count_macs(const ModelConfig& c, Phase phase, std::size_t frames, std::size_t bins) {
  c.validate();
  const auto enc = encoder_macs(c, frames, bins);
  const std::uint64_t d = c.embedding_dim();
  const std::uint64_t encode = enc.macs + 2 * d * d * enc.frames_out;
  const std::uint64_t classify = d * c.classifier_hidden + c.classifier_hidden * c.num_classes;
  if (c.variant == Variant::kBaseline) return encode + classify;
  if (phase == Phase::kInference) return encode + projector_macs(c) + classify;
  const std::uint64_t restore = 2 * d * c.restorer_hidden + c.restorer_hidden * d;
  return 2 * encode + 2 * projector_macs(c) + restore + classify;
}

ComplexityReport report(const ModelConfig& c, Phase phase, std::size_t frames, std::size_t bins) {
  return {phase, count_params(c, phase), count_macs(c, phase, frames, bins)};
}

std::string to_json(const ComplexityReport& r) {
  nlohmann::ordered_json j{{"phase", phase_name(r.phase)}, {"params", r.params}, {"macs", r.macs}};
  return j.dump(2);
}

}  // namespace dsnet::complexity
