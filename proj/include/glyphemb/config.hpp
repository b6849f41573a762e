// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Flat key=value experiment configuration.
//
//   # comment
//   task = seg
//   embedder = mixed
//
// Unknown keys and duplicate keys are errors. Model-size keys left unset take
// the per-task defaults (lm: K=300, H=128; seg: K=100, H=100).

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <vector>

#include "glyphemb/lm.hpp"
#include "glyphemb/segmentor.hpp"

namespace glyphemb {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Task { lm, seg };

inline std::string to_string(Task t) { return t == Task::lm ? "lm" : "seg"; }

inline Task parse_task(const std::string& s) {
  if (s == "lm") return Task::lm;
  if (s == "seg") return Task::seg;
  throw ConfigError("unknown task '" + s + "' (lm|seg)");
}

struct ExperimentConfig {
  Task task = Task::lm;
  EmbedderKind embedder = EmbedderKind::id;
  Backbone backbone = Backbone::bilstm;
  std::string train;
  std::string test;
  std::string atlas;
  std::uint64_t seed = 1;
  std::size_t embedding_dim = 300;
  std::size_t hidden_dim = 128;
  std::size_t resolution = kDefaultResolution;
  std::string cnn_spec = format_cnn_spec(lm_cnn_spec());
  std::size_t max_vocab = Vocab::kDefaultMaxSize;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;
  double clip_norm = 5.0;
  bool jitter = false;
  bool oov_glyphs = false;
  double dev_fraction = 0.1;
  double threshold = 0.5;
  std::size_t bins = 50;
  std::string tag;
  std::string runs_root = "runs";

  static ExperimentConfig defaults_for(Task t) {
    ExperimentConfig c;
    c.task = t;
    if (t == Task::seg) {
      c.embedding_dim = 100;
      c.hidden_dim = 100;
      c.cnn_spec = format_cnn_spec(seg_cnn_spec());
    }
    return c;
  }

  EmbedderConfig embedder_config() const {
    return EmbedderConfig{embedder, embedding_dim, resolution, parse_cnn_spec(cnn_spec)};
  }

  LmConfig lm_config() const { return LmConfig{embedder_config(), hidden_dim, oov_glyphs}; }

  SegConfig seg_config() const {
    return SegConfig{backbone, embedder_config(), hidden_dim, oov_glyphs, threshold};
  }

  TrainOptions train_options() const {
    TrainOptions o;
    o.batch_size = batch_size;
    o.adam = AdamOptions{lr, beta1, beta2, epsilon};
    o.epochs = epochs;
    o.max_steps = max_steps;
    o.clip_norm = clip_norm;
    o.jitter = jitter;
    o.seed = seed;
    o.dev_fraction = dev_fraction;
    return o;
  }

  /// Checks every value; does not touch the filesystem.
  void validate() const {
    try {
      if (task == Task::lm) lm_config().validate();
      else seg_config().validate();
      train_options().adam.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (max_vocab == 0) throw ConfigError("max_vocab must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(clip_norm >= 0)) throw ConfigError("clip_norm must be >= 0 (0 disables)");
    if (!(dev_fraction >= 0 && dev_fraction < 1)) throw ConfigError("dev_fraction must lie in [0, 1)");
    if (bins == 0) throw ConfigError("bins must be >= 1");
    if (resolution < 16) throw ConfigError("resolution must be >= 16");
    if (tag.find_first_of("/\\ \t") != std::string::npos)
      throw ConfigError("tag must not contain path separators or spaces");
  }

  /// Checks that the input files named by the config exist.
  void validate_inputs() const {
    namespace fs = std::filesystem;
    if (train.empty()) throw ConfigError("train path is not set");
    if (!fs::exists(train)) throw ConfigError("train file not found: " + train);
    if (!test.empty() && !fs::exists(test)) throw ConfigError("test file not found: " + test);
    if (embedder != EmbedderKind::id || oov_glyphs) {
      if (atlas.empty()) throw ConfigError("embedder '" + to_string(embedder) + "' needs an atlas");
      if (!fs::exists(atlas)) throw ConfigError("atlas file not found: " + atlas);
    }
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty())
    throw ConfigError("'" + key + "': not a valid number: '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

inline std::string format_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

struct ConfigField {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define GLYPHEMB_FIELD_STR(name)                                              \
  ConfigField{#name, [](ExperimentConfig& c, const std::string& v) { c.name = v; }, \
              [](const ExperimentConfig& c) { return c.name; }}
#define GLYPHEMB_FIELD_NUM(name)                                                           \
  ConfigField{#name,                                                                       \
              [](ExperimentConfig& c, const std::string& v) {                              \
                c.name = parse_number<decltype(c.name)>(#name, v);                         \
              },                                                                           \
              [](const ExperimentConfig& c) {                                              \
                if constexpr (std::is_floating_point_v<decltype(c.name)>)                  \
                  return format_double(c.name);                                            \
                else                                                                       \
                  return std::to_string(c.name);                                           \
              }}
#define GLYPHEMB_FIELD_BOOL(name)                                                                \
  ConfigField{#name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
              [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); }}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      ConfigField{"task", [](ExperimentConfig& c, const std::string& v) { c.task = parse_task(v); },
                  [](const ExperimentConfig& c) { return to_string(c.task); }},
      ConfigField{"embedder",
                  [](ExperimentConfig& c, const std::string& v) {
                    try {
                      c.embedder = parse_embedder_kind(v);
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                    }
                  },
                  [](const ExperimentConfig& c) { return to_string(c.embedder); }},
      ConfigField{"backbone",
                  [](ExperimentConfig& c, const std::string& v) {
                    try {
                      c.backbone = parse_backbone(v);
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                    }
                  },
                  [](const ExperimentConfig& c) { return to_string(c.backbone); }},
      GLYPHEMB_FIELD_STR(train),
      GLYPHEMB_FIELD_STR(test),
      GLYPHEMB_FIELD_STR(atlas),
      GLYPHEMB_FIELD_NUM(seed),
      GLYPHEMB_FIELD_NUM(embedding_dim),
      GLYPHEMB_FIELD_NUM(hidden_dim),
      GLYPHEMB_FIELD_NUM(resolution),
      ConfigField{"cnn_spec",
                  [](ExperimentConfig& c, const std::string& v) {
                    try {
                      c.cnn_spec = format_cnn_spec(parse_cnn_spec(v));
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError(std::string("'cnn_spec': ") + e.what());
                    }
                  },
                  [](const ExperimentConfig& c) { return c.cnn_spec; }},
      GLYPHEMB_FIELD_NUM(max_vocab),
      GLYPHEMB_FIELD_NUM(batch_size),
      GLYPHEMB_FIELD_NUM(lr),
      GLYPHEMB_FIELD_NUM(beta1),
      GLYPHEMB_FIELD_NUM(beta2),
      GLYPHEMB_FIELD_NUM(epsilon),
      GLYPHEMB_FIELD_NUM(epochs),
      GLYPHEMB_FIELD_NUM(max_steps),
      GLYPHEMB_FIELD_NUM(clip_norm),
      GLYPHEMB_FIELD_BOOL(jitter),
      GLYPHEMB_FIELD_BOOL(oov_glyphs),
      GLYPHEMB_FIELD_NUM(dev_fraction),
      GLYPHEMB_FIELD_NUM(threshold),
      GLYPHEMB_FIELD_NUM(bins),
      GLYPHEMB_FIELD_STR(tag),
      GLYPHEMB_FIELD_STR(runs_root),
  };
  return fields;
}

#undef GLYPHEMB_FIELD_STR
#undef GLYPHEMB_FIELD_NUM
#undef GLYPHEMB_FIELD_BOOL

}  // namespace detail

/// Raw key/value pairs in file order; rejects malformed lines and duplicates.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(std::string_view(body).substr(0, eq));
    std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (auto it = seen.find(key); it != seen.end())
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                        "' (first on line " + std::to_string(it->second) + ")");
    seen[key] = lineno;
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

/// Applies key/value overrides to an existing config.
inline void apply_overrides(ExperimentConfig& cfg,
                            const std::vector<std::pair<std::string, std::string>>& kv) {
  const auto& fields = detail::config_fields();
  for (const auto& [key, value] : kv) {
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const detail::ConfigField& f) { return key == f.key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(cfg, value);
  }
}

/// Parses and validates a config. `default_task` applies when the text has
/// no `task` key.
inline ExperimentConfig parse_config(const std::string& text, Task default_task = Task::lm) {
  const auto kv = parse_key_values(text);
  Task task = default_task;
  for (const auto& [k, v] : kv)
    if (k == "task") task = parse_task(v);
  ExperimentConfig cfg = ExperimentConfig::defaults_for(task);
  apply_overrides(cfg, kv);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, Task default_task = Task::lm) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), default_task);
}

/// Every key with its resolved value; parse_config(echo_config(c)) == c.
inline std::string echo_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : detail::config_fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : detail::config_fields()) out.emplace_back(f.key);
  return out;
}

}  // namespace glyphemb
