#pragma once

#include <filesystem>
#include <vector>

namespace dsnet::audio {

inline constexpr int kTargetSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate = kTargetSampleRate;
};

// Reads a 16-bit PCM mono RIFF/WAVE file at its native rate.
Waveform read_wav(const std::filesystem::path& path);

// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wave);

// Windowed-sinc resampler (Kaiser window, cutoff at the lower Nyquist rate).
// Output length is round(len * target / source).
Waveform resample(const Waveform& wave, int target_rate);

// read_wav followed by resampling to 16 kHz.
Waveform load_audio(const std::filesystem::path& path);

}  // namespace dsnet::audio
