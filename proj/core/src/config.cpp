#include "dsnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "dsnet/error.hpp"

namespace dsnet::config {
namespace {

enum class Kind { kDouble, kInt, kUint, kBool, kString, kSizes };

struct KeySpec {
  Kind kind;
  const char* default_value;
};

const std::map<std::string, KeySpec>& registry() {
  static const std::map<std::string, KeySpec> keys{
      {"model.variant", {Kind::kString, "dsnet"}},
      {"model.conv_channels", {Kind::kSizes, "32,64,128,256"}},
      {"model.kernel", {Kind::kUint, "5"}},
      {"model.projector_bottleneck", {Kind::kUint, "64"}},
      {"model.projector_blocks", {Kind::kUint, "1"}},
      {"model.restorer_hidden", {Kind::kUint, "256"}},
      {"model.classifier_hidden", {Kind::kUint, "64"}},
      {"model.num_classes", {Kind::kUint, "4"}},
      {"model.dropout", {Kind::kDouble, "0.5"}},
      {"model.bn_momentum", {Kind::kDouble, "0.1"}},
      {"model.bn_eps", {Kind::kDouble, "1e-05"}},
      {"loss.alpha", {Kind::kDouble, "1"}},
      {"loss.beta", {Kind::kDouble, "1"}},
      {"loss.gamma", {Kind::kDouble, "1"}},
      {"loss.softmax_temperature", {Kind::kDouble, "1"}},
      {"loss.stop_gradient_neutral", {Kind::kBool, "false"}},
      {"train.learning_rate", {Kind::kDouble, "0.001"}},
      {"train.max_epochs", {Kind::kUint, "100"}},
      {"train.plateau_patience", {Kind::kUint, "20"}},
      {"train.lr_halving_factor", {Kind::kDouble, "0.5"}},
      {"train.batch_size", {Kind::kUint, "32"}},
      {"train.seed", {Kind::kUint, "0"}},
      {"train.select_by", {Kind::kString, "uar"}},
      {"train.checkpoint_dir", {Kind::kString, ""}},
      {"train.save_epoch_checkpoints", {Kind::kBool, "true"}},
      {"data.manifest", {Kind::kString, ""}},
      {"data.eval_manifest", {Kind::kString, ""}},
  };
  return keys;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if constexpr (std::is_unsigned_v<T>) {
    if (s.front() == '-' || s.front() == '+') return false;
  }
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string canonical(const std::string& key, Kind kind, const std::string& raw) {
  const std::string v = trim(raw);
  auto bad = [&](const char* what) {
    return ValidationError("config: " + key + " expects " + what + ", got '" + v + "'");
  };
  switch (kind) {
    case Kind::kDouble: {
      double d = 0.0;
      if (!parse_number(v, d)) throw bad("a number");
      return format_double(d);
    }
    case Kind::kInt: {
      std::int64_t i = 0;
      if (!parse_number(v, i)) throw bad("an integer");
      return std::to_string(i);
    }
    case Kind::kUint: {
      std::uint64_t u = 0;
      if (!parse_number(v, u)) throw bad("a non-negative integer");
      return std::to_string(u);
    }
    case Kind::kBool: {
      std::string lower = v;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      if (lower == "true" || lower == "1" || lower == "yes" || lower == "on") return "true";
      if (lower == "false" || lower == "0" || lower == "no" || lower == "off") return "false";
      throw bad("a boolean");
    }
    case Kind::kSizes: {
      std::string out;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::uint64_t u = 0;
        if (!parse_number(std::string_view(trim(item)), u)) throw bad("a comma-separated list of integers");
        if (!out.empty()) out += ',';
        out += std::to_string(u);
      }
      if (out.empty()) throw bad("a comma-separated list of integers");
      return out;
    }
    case Kind::kString:
      return v;
  }
  return v;
}

const KeySpec& spec_of(const std::string& key) {
  const auto it = registry().find(key);
  if (it == registry().end()) throw ValidationError("config: unknown key '" + key + "'");
  return it->second;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

bool is_known_key(const std::string& key) { return registry().contains(key); }

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

Config::Config() {
  for (const auto& [key, spec] : registry()) entries_[key] = canonical(key, spec.kind, spec.default_value);
}

Config Config::parse(std::string_view text, std::string_view origin) {
  Config cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ValidationError(where + ": expected key=value");
    try {
      cfg.set(trim(std::string_view(s).substr(0, eq)), s.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  entries_[key] = canonical(key, spec_of(key).kind, value);
  explicit_.insert(key);
}

void Config::merge(const std::map<std::string, std::string>& overlay) {
  for (const auto& [k, v] : overlay) set(k, v);
}

const std::string& Config::get(const std::string& key) const {
  spec_of(key);
  return entries_.at(key);
}

double Config::get_double(const std::string& key) const {
  double d = 0.0;
  parse_number(std::string_view(get(key)), d);
  return d;
}

std::int64_t Config::get_int(const std::string& key) const {
  std::int64_t i = 0;
  parse_number(std::string_view(get(key)), i);
  return i;
}

std::uint64_t Config::get_uint(const std::string& key) const {
  std::uint64_t u = 0;
  parse_number(std::string_view(get(key)), u);
  return u;
}

bool Config::get_bool(const std::string& key) const { return get(key) == "true"; }

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(std::stoull(item)));
  return out;
}

std::string Config::dump() const { return dump(""); }

std::string Config::dump(std::string_view prefix) const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    if (!k.starts_with(prefix)) continue;
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::string Config::hash() const { return fnv1a_hex(dump()); }

model::ModelConfig model_config_from(const Config& cfg) {
  model::ModelConfig m;
  m.variant = model::parse_variant(cfg.get("model.variant"));
  m.conv_channels = cfg.get_sizes("model.conv_channels");
  m.kernel = cfg.get_uint("model.kernel");
  m.projector_bottleneck = cfg.get_uint("model.projector_bottleneck");
  m.projector_blocks = cfg.get_uint("model.projector_blocks");
  m.restorer_hidden = cfg.get_uint("model.restorer_hidden");
  m.classifier_hidden = cfg.get_uint("model.classifier_hidden");
  m.num_classes = cfg.get_uint("model.num_classes");
  m.dropout = cfg.get_double("model.dropout");
  m.bn_momentum = cfg.get_double("model.bn_momentum");
  m.bn_eps = cfg.get_double("model.bn_eps");
  m.validate();
  return m;
}

void store_model_config(Config& cfg, const model::ModelConfig& m) {
  std::string channels;
  for (std::size_t c : m.conv_channels) {
    if (!channels.empty()) channels += ',';
    channels += std::to_string(c);
  }
  cfg.set("model.variant", model::variant_name(m.variant));
  cfg.set("model.conv_channels", channels);
  cfg.set("model.kernel", std::to_string(m.kernel));
  cfg.set("model.projector_bottleneck", std::to_string(m.projector_bottleneck));
  cfg.set("model.projector_blocks", std::to_string(m.projector_blocks));
  cfg.set("model.restorer_hidden", std::to_string(m.restorer_hidden));
  cfg.set("model.classifier_hidden", std::to_string(m.classifier_hidden));
  cfg.set("model.num_classes", std::to_string(m.num_classes));
  cfg.set("model.dropout", format_double(m.dropout));
  cfg.set("model.bn_momentum", format_double(m.bn_momentum));
  cfg.set("model.bn_eps", format_double(m.bn_eps));
}

losses::LossOptions loss_options_from(const Config& cfg) {
  losses::LossOptions o;
  o.weights.alpha = cfg.get_double("loss.alpha");
  o.weights.beta = cfg.get_double("loss.beta");
  o.weights.gamma = cfg.get_double("loss.gamma");
  o.softmax_temperature = cfg.get_double("loss.softmax_temperature");
  if (o.weights.alpha < 0 || o.weights.beta < 0 || o.weights.gamma < 0) {
    throw ValidationError("config: loss weights must be non-negative");
  }
  if (!(o.softmax_temperature > 0)) throw ValidationError("config: loss.softmax_temperature must be positive");
  return o;
}

std::string model_hash(const Config& cfg) { return fnv1a_hex(cfg.dump("model.")); }

}  // namespace dsnet::config
