#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "braintim/dataset.hpp"
#include "braintim/error.hpp"
#include "braintim/features.hpp"
#include "braintim/generator.hpp"
#include "braintim/model.hpp"
#include "braintim/train.hpp"

namespace braintim {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// `key = value` lines; `#` starts a comment; blank lines are ignored.
inline KeyValues parse_key_values(const std::string& text, const std::string& origin = "config") {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

// Applies `--key=value` arguments on top of `kv`.
inline void apply_overrides(KeyValues& kv, const std::vector<std::string>& args) {
  for (const auto& a : args) {
    if (a.rfind("--", 0) != 0 || a.find('=') == std::string::npos) {
      throw ConfigError("expected --key=value, got '" + a + "'");
    }
    const auto eq = a.find('=');
    const auto key = a.substr(2, eq - 2);
    if (key.empty()) throw ConfigError("empty key in '" + a + "'");
    kv[key] = a.substr(eq + 1);
  }
}

// Typed access that remembers which keys were read so leftovers can be
// reported as unknown.
class ConfigReader {
 public:
  explicit ConfigReader(const KeyValues& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get(const std::string& key, double fallback) {
    const auto s = get(key, std::string{});
    if (s.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": expected a number, got '" + s + "'");
    }
  }

  int get(const std::string& key, int fallback) {
    const auto s = get(key, std::string{});
    if (s.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<int>(v);
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": expected an integer, got '" + s + "'");
    }
  }

  std::uint64_t get(const std::string& key, std::uint64_t fallback) {
    const auto s = get(key, std::string{});
    if (s.empty()) return fallback;
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size() || s[0] == '-') throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": expected an unsigned integer, got '" + s + "'");
    }
  }

  bool get(const std::string& key, bool fallback) {
    const auto s = get(key, std::string{});
    if (s.empty()) return fallback;
    if (s == "true" || s == "on" || s == "1") return true;
    if (s == "false" || s == "off" || s == "0") return false;
    throw ConfigError("key " + key + ": expected true/false, got '" + s + "'");
  }

  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

  void require_all_used() const {
    const auto u = unused();
    if (u.empty()) return;
    std::string msg = "unknown configuration key";
    msg += u.size() > 1 ? "s:" : ":";
    for (const auto& k : u) msg += " " + k;
    throw ConfigError(msg);
  }

 private:
  const KeyValues& kv_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Component configs <-> key/value maps

inline std::string format_pairs(const std::vector<ConfusablePair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    if (!out.empty()) out += ",";
    out += std::to_string(p.action_a) + ":" + std::to_string(p.action_b) + ":" + detail::format_double(p.visual_rho) +
           ":" + detail::format_double(p.brain_rho);
  }
  return out;
}

// "a:b:rho_v:rho_b,..."
inline std::vector<ConfusablePair> parse_pairs(const std::string& s) {
  std::vector<ConfusablePair> out;
  for (const auto& item : detail::split(s, ',')) {
    const auto f = detail::split(item, ':');
    if (f.size() != 4) throw ConfigError("confusable pair '" + item + "' must be a:b:rho_v:rho_b");
    try {
      out.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stod(f[2]), std::stod(f[3])});
    } catch (const std::exception&) {
      throw ConfigError("confusable pair '" + item + "' is not numeric");
    }
  }
  return out;
}

template <class T>
std::string format_list(const std::vector<T>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ",";
    out += std::to_string(x);
  }
  return out;
}

inline std::vector<std::uint64_t> parse_u64_list(const std::string& key, const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : detail::split(s, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(item, &pos));
      if (pos != item.size() || item[0] == '-') throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": '" + item + "' is not an unsigned integer");
    }
  }
  return out;
}

inline void put(KeyValues& kv, const std::string& k, double v) { kv[k] = detail::format_double(v); }
inline void put(KeyValues& kv, const std::string& k, int v) { kv[k] = std::to_string(v); }
inline void put(KeyValues& kv, const std::string& k, std::uint64_t v) { kv[k] = std::to_string(v); }
inline void put(KeyValues& kv, const std::string& k, bool v) { kv[k] = v ? "true" : "false"; }
inline void put(KeyValues& kv, const std::string& k, const std::string& v) { kv[k] = v; }

inline void to_kv(KeyValues& kv, const GeneratorSpec& g) {
  put(kv, "gen.seed", g.seed);
  put(kv, "gen.subjects", g.subjects);
  put(kv, "gen.scenes", g.scenes);
  put(kv, "gen.sessions_per_subject", g.sessions_per_subject);
  put(kv, "gen.actions_per_session", g.actions_per_session);
  put(kv, "gen.action_min_s", g.action_min_s);
  put(kv, "gen.action_max_s", g.action_max_s);
  put(kv, "gen.consume_repeats", g.consume_repeats);
  put(kv, "gen.video_rate", g.video_rate);
  put(kv, "gen.signal_rate", g.signal_rate);
  put(kv, "gen.channels", g.channels);
  put(kv, "gen.height", g.height);
  put(kv, "gen.width", g.width);
  put(kv, "gen.visual_gain", g.visual_gain);
  put(kv, "gen.visual_noise", g.visual_noise);
  put(kv, "gen.scene_visual_shift", g.scene_visual_shift);
  put(kv, "gen.brain_gain", g.brain_gain);
  put(kv, "gen.brain_noise", g.brain_noise);
  put(kv, "gen.brain_pair_gain", g.brain_pair_gain);
  put(kv, "gen.brain_offset_s", g.brain_offset_s);
  put(kv, "gen.subject_latency_s", g.subject_latency_s);
  put(kv, "gen.subject_gain_jitter", g.subject_gain_jitter);
  put(kv, "gen.confusable_pairs", format_pairs(g.confusable_pairs));
}

inline GeneratorSpec read_generator(ConfigReader& r, GeneratorSpec g = {}) {
  g.seed = r.get("gen.seed", g.seed);
  g.subjects = r.get("gen.subjects", g.subjects);
  g.scenes = r.get("gen.scenes", g.scenes);
  g.sessions_per_subject = r.get("gen.sessions_per_subject", g.sessions_per_subject);
  g.actions_per_session = r.get("gen.actions_per_session", g.actions_per_session);
  g.action_min_s = r.get("gen.action_min_s", g.action_min_s);
  g.action_max_s = r.get("gen.action_max_s", g.action_max_s);
  g.consume_repeats = r.get("gen.consume_repeats", g.consume_repeats);
  g.video_rate = r.get("gen.video_rate", g.video_rate);
  g.signal_rate = r.get("gen.signal_rate", g.signal_rate);
  g.channels = r.get("gen.channels", g.channels);
  g.height = r.get("gen.height", g.height);
  g.width = r.get("gen.width", g.width);
  g.visual_gain = r.get("gen.visual_gain", g.visual_gain);
  g.visual_noise = r.get("gen.visual_noise", g.visual_noise);
  g.scene_visual_shift = r.get("gen.scene_visual_shift", g.scene_visual_shift);
  g.brain_gain = r.get("gen.brain_gain", g.brain_gain);
  g.brain_noise = r.get("gen.brain_noise", g.brain_noise);
  g.brain_pair_gain = r.get("gen.brain_pair_gain", g.brain_pair_gain);
  g.brain_offset_s = r.get("gen.brain_offset_s", g.brain_offset_s);
  g.subject_latency_s = r.get("gen.subject_latency_s", g.subject_latency_s);
  g.subject_gain_jitter = r.get("gen.subject_gain_jitter", g.subject_gain_jitter);
  if (r.has("gen.confusable_pairs")) g.confusable_pairs = parse_pairs(r.get("gen.confusable_pairs", std::string{}));
  g.validate();
  return g;
}

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "synthetic-video") return EncoderKind::SyntheticVideo;
  if (s == "synthetic-signal") return EncoderKind::SyntheticSignal;
  if (s == "precomputed") return EncoderKind::Precomputed;
  throw ConfigError("unknown encoder kind '" + s + "'");
}

inline void to_kv(KeyValues& kv, const FeatureConfig& f) {
  put(kv, "features.window_s", f.window_s);
  put(kv, "features.step_s", f.step_s);
  put(kv, "features.frames", f.frames_per_window);
  put(kv, "features.visual_kind", to_string(f.visual.kind));
  put(kv, "features.visual_dim", f.visual.out_dim);
  put(kv, "features.visual_seed", f.visual.seed);
  put(kv, "features.brain_kind", to_string(f.brain.kind));
  put(kv, "features.brain_dim", f.brain.out_dim);
  put(kv, "features.brain_seed", f.brain.seed);
  put(kv, "features.low_hz", f.preprocessing.low_hz);
  put(kv, "features.high_hz", f.preprocessing.high_hz);
  put(kv, "features.brain_rate", f.preprocessing.target_rate.hz());
}

inline FeatureConfig read_features(ConfigReader& r, FeatureConfig f = {}) {
  f.window_s = r.get("features.window_s", f.window_s);
  f.step_s = r.get("features.step_s", f.step_s);
  f.frames_per_window = r.get("features.frames", f.frames_per_window);
  f.visual.kind = parse_encoder_kind(r.get("features.visual_kind", to_string(f.visual.kind)));
  f.visual.out_dim = r.get("features.visual_dim", f.visual.out_dim);
  f.visual.seed = r.get("features.visual_seed", f.visual.seed);
  f.brain.kind = parse_encoder_kind(r.get("features.brain_kind", to_string(f.brain.kind)));
  f.brain.out_dim = r.get("features.brain_dim", f.brain.out_dim);
  f.brain.seed = r.get("features.brain_seed", f.brain.seed);
  f.preprocessing.low_hz = r.get("features.low_hz", f.preprocessing.low_hz);
  f.preprocessing.high_hz = r.get("features.high_hz", f.preprocessing.high_hz);
  f.preprocessing.target_rate = Rational::from_hz(r.get("features.brain_rate", f.preprocessing.target_rate.hz()));
  if (f.frames_per_window < 1) throw ConfigError("features.frames must be >= 1");
  f.visual.validate();
  f.brain.validate();
  return f;
}

inline std::string format_tasks(const std::map<Task, int>& counts) {
  std::string out;
  for (const auto& [t, n] : counts) {
    if (!out.empty()) out += ",";
    out += to_string(t);
  }
  return out;
}

// The model's feature widths come from the feature config in a run config;
// checkpoints store them explicitly (`with_dims`).
inline void to_kv(KeyValues& kv, const ModelConfig& m, bool with_dims) {
  put(kv, "model.dim", m.dim);
  put(kv, "model.layers", m.layers);
  put(kv, "model.heads", m.heads);
  put(kv, "model.ffn_dim", m.ffn_dim);
  put(kv, "model.queries", m.queries);
  put(kv, "model.fusion", to_string(m.fusion));
  put(kv, "model.use_embedding", m.use_embedding);
  put(kv, "model.use_tim", m.use_tim);
  put(kv, "model.use_modality", m.use_modality);
  put(kv, "model.time_unit", m.time_unit);
  put(kv, "model.norm_eps", m.norm_eps);
  put(kv, "model.tasks", format_tasks(m.class_counts));
  if (with_dims) {
    put(kv, "model.visual_dim", m.visual_dim);
    put(kv, "model.brain_dim", m.brain_dim);
    for (const auto& [t, n] : m.class_counts) put(kv, "model.classes." + to_string(t), n);
  }
}

inline ModelConfig read_model(ConfigReader& r, ModelConfig m = {}, bool with_dims = false) {
  m.dim = r.get("model.dim", m.dim);
  m.layers = r.get("model.layers", m.layers);
  m.heads = r.get("model.heads", m.heads);
  m.ffn_dim = r.get("model.ffn_dim", m.ffn_dim);
  m.queries = r.get("model.queries", m.queries);
  m.fusion = parse_fusion(r.get("model.fusion", to_string(m.fusion)));
  m.use_embedding = r.get("model.use_embedding", m.use_embedding);
  m.use_tim = r.get("model.use_tim", m.use_tim);
  m.use_modality = r.get("model.use_modality", m.use_modality);
  m.time_unit = r.get("model.time_unit", m.time_unit);
  m.norm_eps = r.get("model.norm_eps", m.norm_eps);
  if (r.has("model.tasks")) {
    std::map<Task, int> counts;
    for (const auto& t : detail::split(r.get("model.tasks", std::string{}), ',')) {
      const Task task = parse_task(t);
      counts[task] = task == Task::Verb ? kVerbCount : kActionCount;
    }
    m.class_counts = counts;
  }
  if (with_dims) {
    m.visual_dim = r.get("model.visual_dim", m.visual_dim);
    m.brain_dim = r.get("model.brain_dim", m.brain_dim);
    for (auto& [t, n] : m.class_counts) n = r.get("model.classes." + to_string(t), n);
  }
  return m;
}

inline void to_kv(KeyValues& kv, const TrainConfig& t) {
  put(kv, "train.lr", t.learning_rate);
  put(kv, "train.optimizer", to_string(t.optimizer));
  put(kv, "train.beta1", t.beta1);
  put(kv, "train.beta2", t.beta2);
  put(kv, "train.epsilon", t.epsilon);
  put(kv, "train.batch_size", t.batch_size);
  put(kv, "train.epochs", t.epochs);
  put(kv, "train.seed", t.seed);
  put(kv, "train.lambda", t.lambda);
  put(kv, "train.eval_every", t.eval_every);
}

inline TrainConfig read_train(ConfigReader& r, TrainConfig t = {}) {
  t.learning_rate = r.get("train.lr", t.learning_rate);
  t.optimizer = parse_optimizer(r.get("train.optimizer", to_string(t.optimizer)));
  t.beta1 = r.get("train.beta1", t.beta1);
  t.beta2 = r.get("train.beta2", t.beta2);
  t.epsilon = r.get("train.epsilon", t.epsilon);
  t.batch_size = r.get("train.batch_size", t.batch_size);
  t.epochs = r.get("train.epochs", t.epochs);
  t.seed = r.get("train.seed", t.seed);
  t.lambda = r.get("train.lambda", t.lambda);
  t.eval_every = r.get("train.eval_every", t.eval_every);
  t.validate();
  return t;
}

// Everything one CLI invocation needs.
struct RunConfig {
  GeneratorSpec generator;
  FeatureConfig features;
  ModelConfig model;
  TrainConfig train;
  SplitMode split_mode = SplitMode::CrossSubject;
  std::vector<std::uint32_t> held_out_scenes;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string checkpoint;
  std::string eval_split = "test";
  std::string results;
};

inline KeyValues to_kv(const RunConfig& c) {
  KeyValues kv;
  to_kv(kv, c.generator);
  to_kv(kv, c.features);
  to_kv(kv, c.model, false);
  to_kv(kv, c.train);
  put(kv, "split.mode", to_string(c.split_mode));
  put(kv, "split.held_out_scenes", format_list(c.held_out_scenes));
  put(kv, "sweep.seeds", format_list(c.seeds));
  put(kv, "io.data", c.data_dir);
  put(kv, "io.out", c.out_dir);
  put(kv, "io.checkpoint", c.checkpoint);
  put(kv, "io.results", c.results);
  put(kv, "eval.split", c.eval_split);
  return kv;
}

inline RunConfig read_run_config(const KeyValues& kv) {
  ConfigReader r(kv);
  RunConfig c;
  c.generator = read_generator(r);
  c.features = read_features(r);
  c.model = read_model(r);
  c.model.visual_dim = c.features.visual.out_dim;
  c.model.brain_dim = c.features.brain.out_dim;
  c.model.validate();
  c.train = read_train(r);
  c.split_mode = parse_split_mode(r.get("split.mode", to_string(c.split_mode)));
  c.held_out_scenes.clear();
  for (auto s : parse_u64_list("split.held_out_scenes", r.get("split.held_out_scenes", std::string{}))) {
    c.held_out_scenes.push_back(static_cast<std::uint32_t>(s));
  }
  if (r.has("sweep.seeds")) c.seeds = parse_u64_list("sweep.seeds", r.get("sweep.seeds", std::string{}));
  c.data_dir = r.get("io.data", c.data_dir);
  c.out_dir = r.get("io.out", c.out_dir);
  c.checkpoint = r.get("io.checkpoint", c.checkpoint);
  c.results = r.get("io.results", c.results);
  c.eval_split = r.get("eval.split", c.eval_split);
  if (c.eval_split != "train" && c.eval_split != "val" && c.eval_split != "test") {
    throw ConfigError("eval.split must be train, val or test");
  }
  r.require_all_used();
  return c;
}

}  // namespace braintim
