#pragma once

#include <cstdint>
#include <string>

#include "dsnet/model.hpp"

namespace dsnet::complexity {

struct ComplexityReport {
  model::Phase phase = model::Phase::kInference;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

std::string phase_name(model::Phase phase);
model::Phase parse_phase(const std::string& name);

// Trainable parameters of the modules active in `phase`. Training adds the
// emotion-irrelevant projector and the restorer; a baseline has neither.
std::uint64_t count_params(const model::ModelConfig& config, model::Phase phase);

/// Forward multiply-accumulates of convolution and linear layers for one
/// frames×bins input (or, in training, one emotional/neutral pair: the
/// encoder and attention pool run twice). Pooling, normalization and
/// activations are not counted.
std::uint64_t count_macs(const model::ModelConfig& config, model::Phase phase, std::size_t frames = 600,
                         std::size_t bins = 80);

ComplexityReport report(const model::ModelConfig& config, model::Phase phase, std::size_t frames = 600,
                        std::size_t bins = 80);

// {"phase": ..., "params": ..., "macs": ...}
std::string to_json(const ComplexityReport& r);

}  // namespace dsnet::complexity
