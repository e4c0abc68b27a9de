#include "dsnet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "dsnet/error.hpp"

namespace dsnet::audio {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put32(std::ostream& os, std::uint32_t v) {
  put16(os, static_cast<std::uint16_t>(v));
  put16(os, static_cast<std::uint16_t>(v >> 16));
}

constexpr double kKaiserBeta = 8.6;
constexpr double kZeroCrossings = 32.0;

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open audio file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ValidationError("not a RIFF/WAVE file: " + path.string());
  }
  bool have_fmt = false;
  int rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw ValidationError("truncated WAV chunk in " + path.string());
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw ValidationError("malformed fmt chunk in " + path.string());
      const auto format = le16(bytes.data() + body);
      const auto channels = le16(bytes.data() + body + 2);
      rate = static_cast<int>(le32(bytes.data() + body + 4));
      const auto bits = le16(bytes.data() + body + 14);
      if (format != 1 || bits != 16) {
        throw ValidationError("unsupported WAV encoding (need 16-bit PCM): " + path.string());
      }
      if (channels != 1) throw ValidationError("unsupported WAV channel count (need mono): " + path.string());
      if (rate <= 0) throw ValidationError("invalid sample rate in " + path.string());
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw ValidationError("WAV data chunk precedes fmt chunk: " + path.string());
      Waveform wave;
      wave.sample_rate = rate;
      const std::size_t count = size / 2;
      if (count == 0) throw ValidationError("WAV file has zero samples: " + path.string());
      wave.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto raw = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        wave.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return wave;
    }
    pos = body + size + (size & 1u);
  }
  throw ValidationError("WAV file has no data chunk: " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  os.write("RIFF", 4);
  put32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put32(os, 16);
  put16(os, 1);
  put16(os, 1);
  put32(os, static_cast<std::uint32_t>(wave.sample_rate));
  put32(os, static_cast<std::uint32_t>(wave.sample_rate * 2));
  put16(os, 2);
  put16(os, 16);
  os.write("data", 4);
  put32(os, data_bytes);
  for (double s : wave.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Waveform resample(const Waveform& wave, int target_rate) {
  if (wave.samples.empty()) throw ValidationError("resample: empty waveform");
  if (wave.sample_rate <= 0 || target_rate <= 0) throw ValidationError("resample: rates must be positive");
  if (wave.sample_rate == target_rate) return wave;

  const double ratio = static_cast<double>(target_rate) / wave.sample_rate;
  // Cutoff in cycles per input sample.
  const double fc = 0.5 * std::min(1.0, ratio);
  const double half_width = kZeroCrossings / (2.0 * fc);
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  const auto in_len = static_cast<std::ptrdiff_t>(wave.samples.size());
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(in_len) * ratio));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(std::max<std::size_t>(out_len, 1));
  for (std::size_t n = 0; n < out.samples.size(); ++n) {
    const double center = static_cast<double>(n) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(center - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(in_len - 1, static_cast<std::ptrdiff_t>(std::floor(center + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double u = center - static_cast<double>(k);
      const double arg = 2.0 * fc * u;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double r = u / half_width;
      const double window = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      acc += wave.samples[static_cast<std::size_t>(k)] * 2.0 * fc * sinc * window;
    }
    out.samples[n] = acc;
  }
  return out;
}

Waveform load_audio(const std::filesystem::path& path) {
  return resample(read_wav(path), kTargetSampleRate);
}

}  // namespace dsnet::audio
