#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "dsnet/audio.hpp"

namespace dsnet::features {

inline constexpr std::size_t kFrameLength = 400;  // 25 ms at 16 kHz
inline constexpr std::size_t kFrameShift = 160;   // 10 ms at 16 kHz
inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kNumMelBins = 80;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kTargetFrames = 600;
inline constexpr double kLogFloor = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the HTK mel scale, applied to a power spectrum of
/// fft_size/2 + 1 bins.
struct MelFilterbank {
  std::size_t num_filters = 0;
  std::size_t num_fft_bins = 0;
  std::vector<double> center_hz;
  std::vector<double> weights;  // num_filters × num_fft_bins

  static MelFilterbank make(std::size_t num_filters, std::size_t fft_size, int sample_rate, double low_hz,
                            double high_hz);
  double weight(std::size_t filter, std::size_t bin) const { return weights[filter * num_fft_bins + bin]; }
};

// frames × bins matrix, row-major.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
};

// Static, delta and delta-delta channels: channels × frames × bins.
struct FeatureBlock {
  std::size_t channels = kChannels;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;

  double at(std::size_t c, std::size_t t, std::size_t f) const { return values[(c * frames + t) * bins + f]; }
  double& at(std::size_t c, std::size_t t, std::size_t f) { return values[(c * frames + t) * bins + f]; }
};

std::size_t frame_count(std::size_t num_samples);

// 80-bin log mel filterbank: Hamming window, 512-point power spectrum,
// mel filters spanning 0-8000 Hz, natural log floored at 1e-10.
FeatureMatrix lmfb(const audio::Waveform& wave);

// First-order regression delta over ±2 frames with edge replication.
FeatureMatrix delta(const FeatureMatrix& m);

FeatureBlock add_deltas(const FeatureMatrix& static_features);

// Head-truncates or cyclically tiles the frame axis to `target` frames.
FeatureBlock fit_length(const FeatureBlock& block, std::size_t target = kTargetFrames);

// Full path: waveform -> LMFB -> deltas -> 600 frames.
FeatureBlock extract(const audio::Waveform& wave);

/// Feature cache file: "DSFT" | version u32 | dims u32[3] | f32 LE payload.
void write_feature_file(const std::filesystem::path& path, const FeatureBlock& block);
FeatureBlock read_feature_file(const std::filesystem::path& path);

}  // namespace dsnet::features
