#include "dsnet/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "dsnet/error.hpp"

namespace dsnet::data {
namespace {

using nlohmann::json;

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return path.lexically_normal().string();
  return (base / path).lexically_normal().string();
}

std::string field(const json& j, const char* key, std::size_t line, bool required) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw ValidationError("manifest line " + std::to_string(line) + ": missing field '" + key + "'");
    return {};
  }
  if (!it->is_string()) {
    throw ValidationError("manifest line " + std::to_string(line) + ": field '" + key + "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

std::string_view emotion_name(Emotion e) {
  switch (e) {
    case Emotion::kAngry: return "angry";
    case Emotion::kHappy: return "happy";
    case Emotion::kNeutral: return "neutral";
    case Emotion::kSad: return "sad";
  }
  return "unknown";
}

std::optional<Emotion> parse_emotion(std::string_view name) {
  if (name == "angry") return Emotion::kAngry;
  if (name == "happy") return Emotion::kHappy;
  if (name == "neutral") return Emotion::kNeutral;
  if (name == "sad") return Emotion::kSad;
  return std::nullopt;
}

std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest: " + path.string());
  const auto base = path.parent_path();
  std::vector<UtteranceRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": parse error: " + e.what());
    }
    if (!j.is_object()) throw ValidationError("manifest line " + std::to_string(line_no) + ": not a JSON object");
    UtteranceRecord r;
    r.id = field(j, "id", line_no, true);
    r.feature_path = resolve(base, field(j, "feature_path", line_no, false));
    r.audio_path = resolve(base, field(j, "audio_path", line_no, false));
    if (r.feature_path.empty() && r.audio_path.empty()) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": needs feature_path or audio_path");
    }
    r.speaker_id = field(j, "speaker", line_no, true);
    const auto emo = field(j, "emotion", line_no, true);
    const auto parsed = parse_emotion(emo);
    if (!parsed) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": unknown emotion '" + emo + "'");
    }
    r.emotion = *parsed;
    r.session = field(j, "session", line_no, false);
    if (!seen.insert(r.id).second) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    if (!r.feature_path.empty()) j["feature_path"] = r.feature_path;
    if (!r.audio_path.empty()) j["audio_path"] = r.audio_path;
    j["speaker"] = r.speaker_id;
    j["emotion"] = std::string(emotion_name(r.emotion));
    j["session"] = r.session;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("failed writing manifest: " + path.string());
}

std::vector<std::string> speakers_of(const std::vector<UtteranceRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.speaker_id);
  return {s.begin(), s.end()};
}

const UtteranceRecord& NeutralReferenceMap::reference_for(const std::string& speaker) const {
  auto it = references.find(speaker);
  if (it == references.end()) throw ValidationError("no neutral reference for speaker '" + speaker + "'");
  return it->second;
}

NeutralReferenceMap build_neutral_map(const std::vector<UtteranceRecord>& records, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> neutrals;
  for (const auto& spk : speakers_of(records)) neutrals[spk];
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].emotion == Emotion::kNeutral) neutrals[records[i].speaker_id].push_back(i);
  }
  std::vector<std::string> missing;
  for (const auto& [spk, idx] : neutrals) {
    if (idx.empty()) missing.push_back(spk);
  }
  if (!missing.empty()) {
    std::string msg = "speakers without any neutral utterance:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  std::mt19937_64 rng(seed);
  NeutralReferenceMap map;
  std::set<std::size_t> chosen;
  for (const auto& [spk, idx] : neutrals) {
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    const std::size_t i = idx[pick(rng)];
    chosen.insert(i);
    map.references.emplace(spk, records[i]);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!chosen.contains(i)) map.pool.push_back(records[i]);
  }
  return map;
}

const FeatureStore::Entry& FeatureStore::get(const std::string& feature_path) {
  auto it = cache_.find(feature_path);
  if (it != cache_.end()) return it->second;
  if (feature_path.empty()) throw IoError("record has no feature_path; run featurize first");
  const auto block = features::read_feature_file(feature_path);
  Entry e;
  e.frames = block.frames;
  e.bins = block.bins;
  e.values.assign(block.values.begin(), block.values.end());
  return cache_.emplace(feature_path, std::move(e)).first->second;
}

void FeatureStore::preload(const std::vector<UtteranceRecord>& records) {
  for (const auto& r : records) get(r.feature_path);
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t num_records, std::size_t batch_size,
                                                 std::uint64_t seed, std::size_t epoch, bool shuffle) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  std::vector<std::size_t> order(num_records);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t i = 0; i < num_records; i += batch_size) {
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                      order.begin() + static_cast<std::ptrdiff_t>(std::min(num_records, i + batch_size)));
  }
  return plan;
}

namespace {

void copy_entry(const FeatureStore::Entry& e, std::size_t frames, std::size_t bins, double* dst,
                const std::string& path) {
  if (e.frames != frames || e.bins != bins) {
    throw ValidationError("feature geometry mismatch in batch: " + path);
  }
  std::copy(e.values.begin(), e.values.end(), dst);
}

}  // namespace

Batch assemble_batch(const std::vector<UtteranceRecord>& records, const std::vector<std::size_t>& indices,
                     FeatureStore& store, const NeutralReferenceMap* neutral) {
  if (indices.empty()) throw ValidationError("empty batch");
  const auto& first = store.get(records[indices.front()].feature_path);
  const std::size_t frames = first.frames, bins = first.bins;
  const std::size_t stride = features::kChannels * frames * bins;
  const std::size_t n = indices.size();
  std::vector<double> x(n * stride);
  std::vector<double> xn;
  if (neutral) xn.resize(n * stride);
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[indices[i]];
    copy_entry(store.get(r.feature_path), frames, bins, x.data() + i * stride, r.feature_path);
    if (neutral) {
      const auto& ref = neutral->reference_for(r.speaker_id);
      copy_entry(store.get(ref.feature_path), frames, bins, xn.data() + i * stride, ref.feature_path);
    }
    b.labels.push_back(r.label());
    b.speaker_ids.push_back(r.speaker_id);
    b.ids.push_back(r.id);
  }
  const Shape shape{n, features::kChannels, frames, bins};
  b.features = Tensor(shape, std::move(x));
  if (neutral) b.neutral_features = Tensor(shape, std::move(xn));
  return b;
}

std::vector<Batch> make_batches(const std::vector<UtteranceRecord>& records, const NeutralReferenceMap& neutral,
                                FeatureStore& store, std::size_t batch_size, std::uint64_t shuffle_seed,
                                std::size_t epoch) {
  std::vector<Batch> out;
  for (const auto& idx : batch_plan(records.size(), batch_size, shuffle_seed, epoch)) {
    out.push_back(assemble_batch(records, idx, store, &neutral));
  }
  return out;
}

}  // namespace dsnet::data
