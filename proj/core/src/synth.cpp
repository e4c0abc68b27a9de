#include "dsnet/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "dsnet/error.hpp"

namespace dsnet::data {
namespace {

std::string padded(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, v);
  return buf;
}

// Gaussian band profile over frequency bins for one emotion class.
std::vector<double> band_profile(int cls, std::size_t bins) {
  std::vector<double> p(bins);
  const double center = (cls + 0.5) * static_cast<double>(bins) / kNumEmotions;
  const double width = static_cast<double>(bins) / 10.0;
  for (std::size_t f = 0; f < bins; ++f) {
    const double d = (static_cast<double>(f) - center) / width;
    p[f] = std::exp(-0.5 * d * d);
  }
  return p;
}

}  // namespace

std::vector<UtteranceRecord> synth_corpus(const SynthOptions& o, const std::filesystem::path& out_dir) {
  if (o.num_speakers < 3) throw ValidationError("synth: need at least 3 speakers");
  if (o.utts_per_speaker < 8) throw ValidationError("synth: need at least 8 utterances per speaker");
  if (o.frames == 0 || o.bins < kNumEmotions) throw ValidationError("synth: invalid feature geometry");
  if (o.speaker_bias_scale < 0 || o.emotion_scale < 0 || o.noise_scale < 0) {
    throw ValidationError("synth: scales must be nonnegative");
  }
  std::filesystem::create_directories(out_dir / "features");

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<double>> bands;
  for (int c = 0; c < kNumEmotions; ++c) bands.push_back(band_profile(c, o.bins));

  std::vector<UtteranceRecord> records;
  for (std::size_t s = 0; s < o.num_speakers; ++s) {
    const std::string speaker = o.speaker_prefix + padded(s, 2);
    // Smoothed random offset: neighbouring bins are correlated, like a
    // speaker's spectral envelope.
    std::vector<double> raw(o.bins), bias(o.bins);
    for (auto& v : raw) v = gauss(rng);
    for (std::size_t f = 0; f < o.bins; ++f) {
      const double l = raw[f == 0 ? 0 : f - 1], r = raw[f + 1 == o.bins ? f : f + 1];
      bias[f] = o.speaker_bias_scale * (0.25 * l + 0.5 * raw[f] + 0.25 * r) / std::sqrt(0.375);
    }
    for (std::size_t u = 0; u < o.utts_per_speaker; ++u) {
      const int cls = static_cast<int>(u % kNumEmotions);
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      const double gain = o.emotion_scale * (0.8 + 0.4 * unit(rng));
      const double rate = (cls + 1) / 16.0;
      features::FeatureMatrix m{o.frames, o.bins, std::vector<double>(o.frames * o.bins)};
      for (std::size_t t = 0; t < o.frames; ++t) {
        const double mod = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * rate * static_cast<double>(t) + phase);
        for (std::size_t f = 0; f < o.bins; ++f) {
          m.values[t * o.bins + f] = bias[f] + gain * mod * bands[cls][f] + o.noise_scale * gauss(rng);
        }
      }
      UtteranceRecord r;
      r.id = speaker + "_u" + padded(u, 3);
      r.feature_path = "features/" + r.id + ".dsft";
      r.speaker_id = speaker;
      r.emotion = static_cast<Emotion>(cls);
      r.session = "ses" + padded(s / 2, 2);
      features::write_feature_file(out_dir / r.feature_path, features::add_deltas(m));
      records.push_back(std::move(r));
    }
  }
  write_manifest(out_dir / "manifest.jsonl", records);
  return load_manifest(out_dir / "manifest.jsonl");
}

}  // namespace dsnet::data
