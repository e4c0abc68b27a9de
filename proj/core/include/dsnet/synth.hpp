#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dsnet/data.hpp"

namespace dsnet::data {

/// Desk-scale emotional corpus. Each static LMFB-like frame is
///   speaker bias (fixed random offset per bin, per speaker)
/// + emotion template (class-specific frequency band with a class-specific
///   temporal modulation rate)
/// + i.i.d. Gaussian noise.
/// Deltas are computed from the synthesized static channel.
struct SynthOptions {
  std::size_t num_speakers = 6;
  std::size_t utts_per_speaker = 40;
  std::uint64_t seed = 0;
  std::size_t frames = features::kTargetFrames;
  std::size_t bins = features::kNumMelBins;
  double speaker_bias_scale = 2.0;
  double emotion_scale = 1.0;
  double noise_scale = 0.5;
  // Prefix for speaker ids, so two corpora never share speakers.
  std::string speaker_prefix = "spk";
};

/// Writes `<out_dir>/features/<id>.dsft` and `<out_dir>/manifest.jsonl`.
/// Emotions cycle angry, happy, neutral, sad within each speaker; speakers
/// are paired into sessions. Returns the records with resolved paths.
std::vector<UtteranceRecord> synth_corpus(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace dsnet::data
