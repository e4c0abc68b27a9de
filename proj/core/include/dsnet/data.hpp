#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dsnet/features.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet::data {

enum class Emotion : int { kAngry = 0, kHappy = 1, kNeutral = 2, kSad = 3 };
inline constexpr int kNumEmotions = 4;

std::string_view emotion_name(Emotion e);
// Accepts the lowercase names; nullopt for anything else.
std::optional<Emotion> parse_emotion(std::string_view name);

struct UtteranceRecord {
  std::string id;
  std::string feature_path;  // DSFT cache file
  std::string audio_path;    // optional source WAV
  std::string speaker_id;
  Emotion emotion = Emotion::kNeutral;
  std::string session;

  int label() const { return static_cast<int>(emotion); }
};

/// JSON-lines manifest. Relative paths are resolved against the manifest's
/// directory. Rejects duplicate ids and unknown emotions, naming the line.
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);

std::vector<std::string> speakers_of(const std::vector<UtteranceRecord>& records);

/// One fixed neutral reference per speaker, plus the records left for
/// training once every reference has been removed.
struct NeutralReferenceMap {
  std::map<std::string, UtteranceRecord> references;  // speaker -> reference
  std::vector<UtteranceRecord> pool;

  const UtteranceRecord& reference_for(const std::string& speaker) const;
};

// Picks each speaker's reference uniformly at random under `seed`. Throws
// ValidationError listing every speaker without a neutral utterance.
NeutralReferenceMap build_neutral_map(const std::vector<UtteranceRecord>& records, std::uint64_t seed);

/// In-memory cache of feature files, keyed by path. Values are held at
/// float32, matching the on-disk precision.
class FeatureStore {
 public:
  struct Entry {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<float> values;
  };

  const Entry& get(const std::string& feature_path);
  // Loads every record's features up front; throws IoError naming the first
  // missing file.
  void preload(const std::vector<UtteranceRecord>& records);
  void clear() { cache_.clear(); }

 private:
  std::unordered_map<std::string, Entry> cache_;
};

struct Batch {
  Tensor features;          // N×3×T×F
  Tensor neutral_features;  // N×3×T×F, row i = reference of speaker_ids[i]; undefined when unpaired
  std::vector<int> labels;
  std::vector<std::string> speaker_ids;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
};

// Index groups for one epoch: seeded shuffle (seed, epoch) when `shuffle`,
// then consecutive chunks of batch_size; the final partial chunk is kept.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t num_records, std::size_t batch_size,
                                                 std::uint64_t seed, std::size_t epoch, bool shuffle = true);

// Gathers features for records[indices]; pairs each row with its speaker's
// neutral reference when `neutral` is given.
Batch assemble_batch(const std::vector<UtteranceRecord>& records, const std::vector<std::size_t>& indices,
                     FeatureStore& store, const NeutralReferenceMap* neutral);

std::vector<Batch> make_batches(const std::vector<UtteranceRecord>& records, const NeutralReferenceMap& neutral,
                                FeatureStore& store, std::size_t batch_size, std::uint64_t shuffle_seed,
                                std::size_t epoch = 0);

}  // namespace dsnet::data
