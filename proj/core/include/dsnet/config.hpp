#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dsnet/losses.hpp"
#include "dsnet/model.hpp"

namespace dsnet::config {

/// Flat key=value configuration with dotted section names
/// (`train.learning_rate=0.001`). Every key is known up front and typed;
/// values are stored in canonical form so equal configurations dump and hash
/// identically however they were written.
class Config {
 public:
  // All known keys at their defaults.
  Config();

  static Config parse(std::string_view text, std::string_view origin = "<string>");
  static Config load(const std::filesystem::path& path);

  // Throws ValidationError for unknown keys or values of the wrong type.
  void set(const std::string& key, const std::string& value);
  void merge(const std::map<std::string, std::string>& overlay);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  // True once `key` has been set explicitly rather than left at its default.
  bool is_set(const std::string& key) const { return explicit_.contains(key); }
  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Sorted `key=value` lines.
  std::string dump() const;
  // Dump restricted to keys starting with `prefix`.
  std::string dump(std::string_view prefix) const;
  std::string hash() const;

 private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> explicit_;
};

bool is_known_key(const std::string& key);
std::vector<std::string> known_keys();

// 16 lowercase hex digits of the 64-bit FNV-1a hash of `text`.
std::string fnv1a_hex(std::string_view text);

model::ModelConfig model_config_from(const Config& cfg);
losses::LossOptions loss_options_from(const Config& cfg);
// Writes `model` back into the model.* keys of `cfg`.
void store_model_config(Config& cfg, const model::ModelConfig& model);
// Hash over model.* keys only; checkpoints are compatible iff this matches.
std::string model_hash(const Config& cfg);

std::string format_double(double v);

}  // namespace dsnet::config
