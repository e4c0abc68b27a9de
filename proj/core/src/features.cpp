#include "dsnet/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>

#include "dsnet/error.hpp"

namespace dsnet::features {
namespace {

constexpr std::uint32_t kFeatureVersion = 1;
constexpr char kFeatureMagic[4] = {'D', 'S', 'F', 'T'};

// FFTW's planner is not thread-safe; plan execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }

  void power(std::vector<double>& out) {
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = out_.get()[k][0] * out_.get()[k][0] + out_.get()[k][1] * out_.get()[k][1];
    }
  }

 private:
  std::size_t n_;
  std::unique_ptr<double, FftwDeleter> in_;
  std::unique_ptr<fftw_complex, FftwDeleter> out_;
  fftw_plan plan_;
};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated feature file: " + path.string());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank MelFilterbank::make(std::size_t num_filters, std::size_t fft_size, int sample_rate, double low_hz,
                                  double high_hz) {
  MelFilterbank fb;
  fb.num_filters = num_filters;
  fb.num_fft_bins = fft_size / 2 + 1;
  fb.weights.assign(num_filters * fb.num_fft_bins, 0.0);
  const double low_mel = hz_to_mel(low_hz), high_mel = hz_to_mel(high_hz);
  std::vector<double> edges(num_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(low_mel + (high_mel - low_mel) * static_cast<double>(i) / static_cast<double>(num_filters + 1));
  }
  fb.center_hz.assign(edges.begin() + 1, edges.end() - 1);
  for (std::size_t m = 0; m < num_filters; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < fb.num_fft_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb.weights[m * fb.num_fft_bins + k] = w;
    }
  }
  return fb;
}

std::size_t frame_count(std::size_t num_samples) {
  if (num_samples < kFrameLength) return 0;
  return 1 + (num_samples - kFrameLength) / kFrameShift;
}

FeatureMatrix lmfb(const audio::Waveform& wave) {
  if (wave.sample_rate != audio::kTargetSampleRate) {
    throw ValidationError("lmfb expects 16 kHz audio, got " + std::to_string(wave.sample_rate) + " Hz");
  }
  const std::size_t frames = frame_count(wave.samples.size());
  if (frames == 0) {
    throw ValidationError("audio shorter than one 400-sample frame (" + std::to_string(wave.samples.size()) +
                          " samples)");
  }
  static const MelFilterbank bank =
      MelFilterbank::make(kNumMelBins, kFftSize, audio::kTargetSampleRate, 0.0, audio::kTargetSampleRate / 2.0);
  std::vector<double> window(kFrameLength);
  for (std::size_t n = 0; n < kFrameLength; ++n) {
    window[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / (kFrameLength - 1));
  }

  RealFft fft(kFftSize);
  std::vector<double> power;
  FeatureMatrix out{frames, kNumMelBins, std::vector<double>(frames * kNumMelBins)};
  for (std::size_t t = 0; t < frames; ++t) {
    double* in = fft.input();
    const double* src = wave.samples.data() + t * kFrameShift;
    for (std::size_t n = 0; n < kFrameLength; ++n) in[n] = src[n] * window[n];
    std::fill(in + kFrameLength, in + kFftSize, 0.0);
    fft.power(power);
    for (std::size_t m = 0; m < kNumMelBins; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bank.num_fft_bins; ++k) e += bank.weight(m, k) * power[k];
      out.values[t * kNumMelBins + m] = std::log(std::max(e, kLogFloor));
    }
  }
  return out;
}

FeatureMatrix delta(const FeatureMatrix& m) {
  constexpr int kWindow = 2;
  constexpr double kDenom = 2.0 * (1.0 + 4.0);
  FeatureMatrix out{m.frames, m.bins, std::vector<double>(m.values.size())};
  const auto last = static_cast<std::ptrdiff_t>(m.frames) - 1;
  for (std::size_t t = 0; t < m.frames; ++t) {
    for (std::size_t f = 0; f < m.bins; ++f) {
      double acc = 0.0;
      for (int n = 1; n <= kWindow; ++n) {
        const auto ahead = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(t) + n);
        const auto behind = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t) - n);
        acc += n * (m.at(static_cast<std::size_t>(ahead), f) - m.at(static_cast<std::size_t>(behind), f));
      }
      out.values[t * m.bins + f] = acc / kDenom;
    }
  }
  return out;
}

FeatureBlock add_deltas(const FeatureMatrix& static_features) {
  if (static_features.frames == 0) throw ValidationError("add_deltas: no frames");
  const FeatureMatrix d1 = delta(static_features);
  const FeatureMatrix d2 = delta(d1);
  FeatureBlock block;
  block.frames = static_features.frames;
  block.bins = static_features.bins;
  block.values.reserve(3 * static_features.values.size());
  block.values.insert(block.values.end(), static_features.values.begin(), static_features.values.end());
  block.values.insert(block.values.end(), d1.values.begin(), d1.values.end());
  block.values.insert(block.values.end(), d2.values.begin(), d2.values.end());
  return block;
}

FeatureBlock fit_length(const FeatureBlock& block, std::size_t target) {
  if (block.frames == 0) throw ValidationError("fit_length: zero frames");
  if (target == 0) throw ValidationError("fit_length: zero target length");
  if (block.frames == target) return block;
  FeatureBlock out;
  out.channels = block.channels;
  out.frames = target;
  out.bins = block.bins;
  out.values.resize(block.channels * target * block.bins);
  for (std::size_t c = 0; c < block.channels; ++c) {
    for (std::size_t t = 0; t < target; ++t) {
      const std::size_t src = t % block.frames;
      std::copy_n(block.values.begin() + static_cast<std::ptrdiff_t>((c * block.frames + src) * block.bins),
                  block.bins, out.values.begin() + static_cast<std::ptrdiff_t>((c * target + t) * block.bins));
    }
  }
  return out;
}

FeatureBlock extract(const audio::Waveform& wave) { return fit_length(add_deltas(lmfb(wave))); }

void write_feature_file(const std::filesystem::path& path, const FeatureBlock& block) {
  if (block.values.size() != block.channels * block.frames * block.bins) {
    throw ValidationError("feature block has inconsistent size");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open feature file for writing: " + path.string());
  os.write(kFeatureMagic, 4);
  put_u32(os, kFeatureVersion);
  put_u32(os, static_cast<std::uint32_t>(block.channels));
  put_u32(os, static_cast<std::uint32_t>(block.frames));
  put_u32(os, static_cast<std::uint32_t>(block.bins));
  for (double v : block.values) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!os) throw IoError("failed writing feature file: " + path.string());
}

FeatureBlock read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("missing feature file: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw IoError("not a DSFT feature file: " + path.string());
  }
  const auto version = get_u32(is, path);
  if (version != kFeatureVersion) throw IoError("unsupported feature file version in " + path.string());
  FeatureBlock block;
  block.channels = get_u32(is, path);
  block.frames = get_u32(is, path);
  block.bins = get_u32(is, path);
  if (block.channels != kChannels || block.frames == 0 || block.bins == 0) {
    throw IoError("feature file has invalid dims: " + path.string());
  }
  block.values.resize(block.channels * block.frames * block.bins);
  for (auto& v : block.values) v = std::bit_cast<float>(get_u32(is, path));
  return block;
}

}  // namespace dsnet::features
