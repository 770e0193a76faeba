#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "braintim/actions.hpp"
#include "braintim/autodiff.hpp"
#include "braintim/error.hpp"
#include "braintim/rng.hpp"
#include "braintim/sample.hpp"
#include "braintim/signal.hpp"
#include "braintim/tensor.hpp"
#include "braintim/timeline.hpp"

namespace braintim {

enum class Fusion { Temporal, Spatial, VisualOnly, BrainOnly };
enum class Task { Verb, Action };

inline std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::Temporal: return "temporal";
    case Fusion::Spatial: return "spatial";
    case Fusion::VisualOnly: return "visual-only";
    case Fusion::BrainOnly: return "brain-only";
  }
  return "unknown";
}

inline Fusion parse_fusion(const std::string& s) {
  if (s == "temporal") return Fusion::Temporal;
  if (s == "spatial") return Fusion::Spatial;
  if (s == "visual-only") return Fusion::VisualOnly;
  if (s == "brain-only") return Fusion::BrainOnly;
  throw ConfigError("unknown fusion mode '" + s + "'");
}

inline std::string to_string(Task t) { return t == Task::Verb ? "verb" : "action"; }

inline Task parse_task(const std::string& s) {
  if (s == "verb") return Task::Verb;
  if (s == "action") return Task::Action;
  throw ConfigError("unknown task '" + s + "'");
}

struct ModelConfig {
  int dim = 16;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 64;
  int queries = 12;
  int visual_dim = 32;
  int brain_dim = 16;
  std::map<Task, int> class_counts = {{Task::Verb, kVerbCount}, {Task::Action, kActionCount}};
  Fusion fusion = Fusion::Temporal;
  bool use_embedding = true;
  bool use_tim = true;
  // Only meaningful for temporal fusion; other modes carry no modality
  // embedding.
  bool use_modality = true;
  // TIM inputs are interval endpoints divided by this many seconds.
  double time_unit = 10.0;
  double norm_eps = 1e-5;

  bool has_visual() const { return fusion != Fusion::BrainOnly; }
  bool has_brain() const { return fusion != Fusion::VisualOnly; }
  bool modality_embedding_active() const { return use_modality && fusion == Fusion::Temporal; }

  std::size_t token_width() const {
    return static_cast<std::size_t>(fusion == Fusion::Spatial ? 3 * dim : 2 * dim);
  }

  std::vector<Modality> branches() const {
    std::vector<Modality> b;
    if (has_visual()) b.push_back(Modality::Visual);
    if (has_brain()) b.push_back(Modality::Brain);
    return b;
  }

  void validate() const {
    if (dim < 1) throw ConfigError("model dim must be >= 1");
    if (layers < 0) throw ConfigError("encoder layers must be >= 0");
    if (heads < 1) throw ConfigError("attention heads must be >= 1");
    if (ffn_dim < 1) throw ConfigError("ffn_dim must be >= 1");
    if (queries < 1) throw ConfigError("queries must be >= 1");
    if (!(time_unit > 0.0)) throw ConfigError("time_unit must be > 0");
    if (class_counts.empty()) throw ConfigError("at least one task head is required");
    for (const auto& [task, n] : class_counts) {
      if (n < 2) throw ConfigError("class count for " + to_string(task) + " must be >= 2");
    }
    if (token_width() % static_cast<std::size_t>(heads) != 0) {
      throw ConfigError("token width " + std::to_string(token_width()) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
    if (!use_embedding) {
      if (has_visual() && visual_dim != dim) {
        throw ConfigError("use_embedding=false requires visual_dim == dim");
      }
      if (has_brain() && brain_dim != dim) {
        throw ConfigError("use_embedding=false requires brain_dim == dim");
      }
    }
  }
};

// Named learnable tensors. Absent names mean the component is toggled off.
struct ModelParams {
  std::map<std::string, Matrix> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  const Matrix& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing parameter " + name);
    return it->second;
  }
  Matrix& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing parameter " + name);
    return it->second;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : tensors) n += v.size();
    return n;
  }
  bool all_finite() const {
    for (const auto& [k, v] : tensors) {
      if (!v.all_finite()) return false;
    }
    return true;
  }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using Gradients = std::map<std::string, Matrix>;

namespace detail {

inline std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string branch_name(Modality m) { return to_string(m); }

}  // namespace detail

enum class InitKind { FanIn, Zero, One, SmallNormal };

struct ParamShape {
  std::string name;
  std::size_t rows, cols;
  InitKind init;
};

// Every tensor the configuration enables, in a fixed order.
inline std::vector<ParamShape> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  const auto D = static_cast<std::size_t>(cfg.dim);
  const auto W = cfg.token_width();
  const auto F = static_cast<std::size_t>(cfg.ffn_dim);
  const auto Q = static_cast<std::size_t>(cfg.queries);
  std::vector<ParamShape> out;
  auto affine = [&](const std::string& prefix, std::size_t in, std::size_t o) {
    out.push_back({prefix + ".weight", in, o, InitKind::FanIn});
    out.push_back({prefix + ".bias", 1, o, InitKind::Zero});
  };
  auto norm = [&](const std::string& prefix, std::size_t n) {
    out.push_back({prefix + ".gain", 1, n, InitKind::One});
    out.push_back({prefix + ".bias", 1, n, InitKind::Zero});
  };
  if (cfg.use_embedding) {
    if (cfg.has_visual()) affine("embed.visual", static_cast<std::size_t>(cfg.visual_dim), D);
    if (cfg.has_brain()) affine("embed.brain", static_cast<std::size_t>(cfg.brain_dim), D);
  }
  if (cfg.use_tim) {
    affine("tim.fc1", 2, D);
    affine("tim.fc2", D, D);
    affine("tim.fc3", D, D);
    norm("tim.norm", D);
  }
  if (cfg.modality_embedding_active()) {
    out.push_back({"modality.visual", 1, 2 * D, InitKind::SmallNormal});
    out.push_back({"modality.brain", 1, 2 * D, InitKind::SmallNormal});
  }
  if (cfg.has_visual()) out.push_back({"cls.visual", Q, D, InitKind::SmallNormal});
  if (cfg.has_brain()) out.push_back({"cls.brain", Q, D, InitKind::SmallNormal});
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    norm(p + ".norm1", W);
    affine(p + ".attn.query", W, W);
    affine(p + ".attn.key", W, W);
    affine(p + ".attn.value", W, W);
    affine(p + ".attn.out", W, W);
    norm(p + ".norm2", W);
    affine(p + ".ffn.fc1", W, F);
    affine(p + ".ffn.fc2", F, W);
  }
  for (auto branch : cfg.branches()) {
    for (const auto& [task, n] : cfg.class_counts) {
      affine("head." + detail::branch_name(branch) + "." + to_string(task), W, static_cast<std::size_t>(n));
    }
  }
  return out;
}

// Fan-in uniform for affine weights, zero biases, N(0, 0.02^2) for CLS and
// modality vectors. Each tensor draws from its own stream keyed by name, so
// enabling or disabling one component leaves every other tensor unchanged.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p;
  for (const auto& s : param_layout(cfg)) {
    Matrix m(s.rows, s.cols);
    Rng rng(mix_seed({seed, detail::name_hash(s.name)}));
    switch (s.init) {
      case InitKind::FanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.rows));
        for (auto& v : m.data()) v = rng.uniform(-bound, bound);
        break;
      }
      case InitKind::Zero: break;
      case InitKind::One: m.fill(1.0); break;
      case InitKind::SmallNormal:
        for (auto& v : m.data()) v = 0.02 * rng.normal();
        break;
    }
    p.tensors.emplace(s.name, std::move(m));
  }
  return p;
}

// Checks that `params` has exactly the layout `cfg` implies.
inline void check_params(const ModelConfig& cfg, const ModelParams& params) {
  const auto layout = param_layout(cfg);
  if (layout.size() != params.tensors.size()) throw ShapeError("parameter set does not match configuration");
  for (const auto& s : layout) {
    const auto& m = params.at(s.name);
    if (m.rows() != s.rows || m.cols() != s.cols) {
      throw ShapeError("parameter " + s.name + " has shape " + m.shape_string() + ", expected " +
                       std::to_string(s.rows) + "x" + std::to_string(s.cols));
    }
  }
}

// ---------------------------------------------------------------------------
// Graph construction

struct ParamVars {
  std::map<std::string, Var> vars;

  bool has(const std::string& name) const { return vars.count(name) != 0; }
  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ConfigError("missing parameter " + name);
    return it->second;
  }
};

inline ParamVars bind_params(Tape& tape, const ModelParams& params) {
  ParamVars pv;
  for (const auto& [name, m] : params.tensors) pv.vars.emplace(name, tape.leaf(m));
  return pv;
}

inline Gradients collect_gradients(const Tape& tape, const ParamVars& pv) {
  Gradients g;
  for (const auto& [name, v] : pv.vars) g.emplace(name, tape.grad(v));
  return g;
}

enum class TokenRole { Feature, Cls };

struct TokenMeta {
  Modality modality = Modality::Visual;
  TokenRole role = TokenRole::Feature;
  double t_start = 0.0;
  double t_end = 0.0;
  // 1-based query for CLS tokens, 1-based window for feature tokens.
  int index = 0;
  friend bool operator==(const TokenMeta&, const TokenMeta&) = default;
};

template <class Rows>
struct BasicTokenSequence {
  Rows rows;
  std::vector<TokenMeta> meta;
};

using TokenSequence = BasicTokenSequence<Matrix>;
using TokenGraph = BasicTokenSequence<Var>;

// Temporal embeddings for a list of intervals, one row each.
inline Var tim_graph(Tape& tape, const ParamVars& pv, const ModelConfig& cfg,
                     const std::vector<std::pair<double, double>>& intervals) {
  for (const auto& [s, e] : intervals) {
    if (!(s < e)) throw InvalidInterval("interval start must precede its end");
  }
  const auto D = static_cast<std::size_t>(cfg.dim);
  if (!cfg.use_tim) return tape.constant(Matrix(intervals.size(), D));
  Matrix x(intervals.size(), 2);
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    x(i, 0) = intervals[i].first / cfg.time_unit;
    x(i, 1) = intervals[i].second / cfg.time_unit;
  }
  Var h = tape.relu(tape.affine(tape.constant(std::move(x)), pv.at("tim.fc1.weight"), pv.at("tim.fc1.bias")));
  h = tape.relu(tape.affine(h, pv.at("tim.fc2.weight"), pv.at("tim.fc2.bias")));
  h = tape.affine(h, pv.at("tim.fc3.weight"), pv.at("tim.fc3.bias"));
  return tape.layer_norm(h, pv.at("tim.norm.gain"), pv.at("tim.norm.bias"), cfg.norm_eps);
}

inline Var embed_graph(Tape& tape, const ParamVars& pv, const ModelConfig& cfg, Modality modality,
                       const Matrix& features) {
  const int expected = modality == Modality::Visual ? cfg.visual_dim : cfg.brain_dim;
  if (features.cols() != static_cast<std::size_t>(expected)) {
    throw ShapeError(to_string(modality) + " feature width " + std::to_string(features.cols()) +
                     " does not match configured " + std::to_string(expected));
  }
  if (!cfg.use_embedding) {
    if (expected != cfg.dim) throw ShapeError("identity embedding requires feature width == dim");
    return tape.constant(features);
  }
  const std::string p = "embed." + to_string(modality);
  return tape.affine(tape.constant(features), pv.at(p + ".weight"), pv.at(p + ".bias"));
}

inline std::vector<std::pair<double, double>> feature_intervals(const WindowSchedule& ws) {
  std::vector<std::pair<double, double>> out;
  for (std::int64_t i = 1; i <= ws.count; ++i) out.push_back(window_interval(ws, i));
  return out;
}

inline std::vector<std::pair<double, double>> query_intervals(const QuerySchedule& qs) {
  std::vector<std::pair<double, double>> out;
  for (int j = 1; j <= qs.count; ++j) out.push_back(query_interval(qs, j));
  return out;
}

// Assembles the encoder input. Pass an invalid Var for a modality the fusion
// mode does not use.
inline TokenGraph build_sequence_graph(Tape& tape, const ParamVars& pv, const ModelConfig& cfg, Var tokens_v,
                                       Var tokens_b, const WindowSchedule& ws, const QuerySchedule& qs) {
  qs.validate();
  if (qs.count != cfg.queries) throw ShapeError("query schedule does not match configured query count");
  const auto N = static_cast<std::size_t>(ws.count);
  const auto D = static_cast<std::size_t>(cfg.dim);
  auto check = [&](Var v, const char* what) {
    if (!v.valid()) throw ShapeError(std::string("missing ") + what + " tokens");
    if (v.value().rows() != N) throw ShapeError(std::string(what) + " token rows do not match window count");
    if (v.value().cols() != D) throw ShapeError(std::string(what) + " token width does not match dim");
  };
  if (cfg.has_visual()) check(tokens_v, "visual");
  if (cfg.has_brain()) check(tokens_b, "brain");

  const auto fi = feature_intervals(ws);
  const auto qi = query_intervals(qs);
  Var ef = tim_graph(tape, pv, cfg, fi);
  Var eq = tim_graph(tape, pv, cfg, qi);

  TokenGraph out;
  auto add_meta = [&](Modality m, TokenRole role, const std::vector<std::pair<double, double>>& iv) {
    for (std::size_t i = 0; i < iv.size(); ++i) {
      out.meta.push_back({m, role, iv[i].first, iv[i].second, static_cast<int>(i + 1)});
    }
  };

  if (cfg.fusion == Fusion::Spatial) {
    Var feat = tape.concat_cols({tokens_v, tokens_b, ef});
    Var cls = tape.concat_cols({pv.at("cls.visual"), pv.at("cls.brain"), eq});
    out.rows = tape.concat_rows({feat, cls});
    add_meta(Modality::Both, TokenRole::Feature, fi);
    add_meta(Modality::Both, TokenRole::Cls, qi);
    return out;
  }

  auto block = [&](Var tokens, Var time, Modality m) {
    Var rows = tape.concat_cols({tokens, time});
    if (cfg.modality_embedding_active()) rows = tape.add_row(rows, pv.at("modality." + to_string(m)));
    return rows;
  };

  std::vector<Var> feature_blocks, cls_blocks;
  for (auto m : cfg.branches()) {
    Var tokens = m == Modality::Visual ? tokens_v : tokens_b;
    feature_blocks.push_back(block(tokens, ef, m));
    add_meta(m, TokenRole::Feature, fi);
  }
  for (auto m : cfg.branches()) {
    cls_blocks.push_back(block(pv.at("cls." + to_string(m)), eq, m));
    add_meta(m, TokenRole::Cls, qi);
  }
  std::vector<Var> all = feature_blocks;
  all.insert(all.end(), cls_blocks.begin(), cls_blocks.end());
  out.rows = tape.concat_rows(all);
  return out;
}

// Pre-norm transformer encoder stack. `key_valid` optionally excludes padded
// tokens from attention.
inline Var encoder_graph(Tape& tape, const ParamVars& pv, const ModelConfig& cfg, Var x,
                         const std::vector<char>& key_valid = {}) {
  const std::size_t W = x.value().cols();
  if (W != cfg.token_width()) throw ConfigError("token width does not match encoder width");
  const auto H = static_cast<std::size_t>(cfg.heads);
  if (W % H != 0) throw ConfigError("token width not divisible by heads");
  const std::size_t hd = W / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::unique_ptr<bool[]> mask;
  std::span<const bool> mask_span;
  if (!key_valid.empty()) {
    mask = std::make_unique<bool[]>(key_valid.size());
    for (std::size_t i = 0; i < key_valid.size(); ++i) mask[i] = key_valid[i] != 0;
    mask_span = {mask.get(), key_valid.size()};
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    Var h = tape.layer_norm(x, pv.at(p + ".norm1.gain"), pv.at(p + ".norm1.bias"), cfg.norm_eps);
    Var q = tape.affine(h, pv.at(p + ".attn.query.weight"), pv.at(p + ".attn.query.bias"));
    Var k = tape.affine(h, pv.at(p + ".attn.key.weight"), pv.at(p + ".attn.key.bias"));
    Var v = tape.affine(h, pv.at(p + ".attn.value.weight"), pv.at(p + ".attn.value.bias"));
    std::vector<Var> heads;
    for (std::size_t i = 0; i < H; ++i) {
      Var qh = tape.slice_cols(q, i * hd, hd);
      Var kh = tape.slice_cols(k, i * hd, hd);
      Var vh = tape.slice_cols(v, i * hd, hd);
      Var att = tape.softmax_rows(tape.scale(tape.matmul_bt(qh, kh), inv_sqrt), mask_span);
      heads.push_back(tape.matmul(att, vh));
    }
    Var o = H == 1 ? heads[0] : tape.concat_cols(heads);
    x = tape.add(x, tape.affine(o, pv.at(p + ".attn.out.weight"), pv.at(p + ".attn.out.bias")));
    Var h2 = tape.layer_norm(x, pv.at(p + ".norm2.gain"), pv.at(p + ".norm2.bias"), cfg.norm_eps);
    Var f = tape.relu(tape.affine(h2, pv.at(p + ".ffn.fc1.weight"), pv.at(p + ".ffn.fc1.bias")));
    x = tape.add(x, tape.affine(f, pv.at(p + ".ffn.fc2.weight"), pv.at(p + ".ffn.fc2.bias")));
  }
  return x;
}

using BranchTask = std::pair<Modality, Task>;

// Row indices of a branch's CLS tokens in query order.
inline std::vector<std::size_t> cls_rows(const std::vector<TokenMeta>& meta, Modality branch, int queries) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(queries), SIZE_MAX);
  for (std::size_t r = 0; r < meta.size(); ++r) {
    const auto& m = meta[r];
    if (m.role != TokenRole::Cls) continue;
    if (m.modality != branch && m.modality != Modality::Both) continue;
    if (m.index < 1 || m.index > queries) throw ShapeError("CLS token has an out-of-range query index");
    idx[static_cast<std::size_t>(m.index - 1)] = r;
  }
  for (auto i : idx) {
    if (i == SIZE_MAX) throw ShapeError("missing CLS rows for the " + to_string(branch) + " branch");
  }
  return idx;
}

// Heads applied to CLS rows only; one Q x N_c logit block per (branch, task).
inline std::map<BranchTask, Var> classify_graph(Tape& tape, const ParamVars& pv, const ModelConfig& cfg,
                                                const TokenGraph& encoded) {
  if (encoded.meta.size() != encoded.rows.value().rows()) throw ShapeError("token metadata does not match rows");
  std::map<BranchTask, Var> out;
  for (auto branch : cfg.branches()) {
    Var cls = tape.gather_rows(encoded.rows, cls_rows(encoded.meta, branch, cfg.queries));
    for (const auto& [task, n] : cfg.class_counts) {
      const std::string p = "head." + to_string(branch) + "." + to_string(task);
      out.emplace(BranchTask{branch, task}, tape.affine(cls, pv.at(p + ".weight"), pv.at(p + ".bias")));
    }
  }
  return out;
}

inline std::vector<int> task_labels(const std::vector<QueryLabel>& labels, Task task) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    if (l.background()) {
      out.push_back(-1);
    } else {
      out.push_back(task == Task::Verb ? l.verb : l.action);
    }
  }
  return out;
}

struct LossGraph {
  Var total;
  std::optional<Var> visual;
  std::optional<Var> brain;
  std::map<BranchTask, Var> parts;
};

// Branch loss = sum of per-task mean cross-entropies; L = L_v + lambda * L_b
// when both branches exist, otherwise the single branch loss.
inline LossGraph loss_graph(Tape& tape, const ModelConfig& cfg, const std::map<BranchTask, Var>& logits,
                            const std::vector<QueryLabel>& labels, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (labels.size() != static_cast<std::size_t>(cfg.queries)) throw ShapeError("label count does not match queries");
  LossGraph out;
  for (auto branch : cfg.branches()) {
    std::optional<Var> branch_loss;
    for (const auto& [task, n] : cfg.class_counts) {
      Var ce = tape.cross_entropy(logits.at({branch, task}), task_labels(labels, task));
      out.parts.emplace(BranchTask{branch, task}, ce);
      branch_loss = branch_loss ? tape.add(*branch_loss, ce) : ce;
    }
    (branch == Modality::Visual ? out.visual : out.brain) = branch_loss;
  }
  if (out.visual && out.brain) {
    out.total = tape.add(*out.visual, tape.scale(*out.brain, lambda));
  } else {
    out.total = out.visual ? *out.visual : *out.brain;
  }
  return out;
}

struct ForwardGraph {
  TokenGraph tokens;
  Var encoded;
  std::map<BranchTask, Var> logits;
  LossGraph loss;
};

inline QuerySchedule query_schedule_for(const ModelConfig& cfg, double duration) {
  return QuerySchedule{cfg.queries, duration};
}

inline ForwardGraph forward_graph(Tape& tape, const ParamVars& pv, const ModelConfig& cfg, const Sample& sample,
                                  double lambda) {
  Var tv, tb;
  WindowSchedule ws;
  if (cfg.has_visual()) {
    tv = embed_graph(tape, pv, cfg, Modality::Visual, sample.visual.vectors);
    ws = sample.visual.schedule;
  }
  if (cfg.has_brain()) {
    tb = embed_graph(tape, pv, cfg, Modality::Brain, sample.brain.vectors);
    if (cfg.has_visual() && !(sample.brain.schedule == ws)) throw ShapeError("modalities use different schedules");
    ws = sample.brain.schedule;
  }
  ForwardGraph f;
  f.tokens = build_sequence_graph(tape, pv, cfg, tv, tb, ws, query_schedule_for(cfg, sample.duration));
  f.encoded = encoder_graph(tape, pv, cfg, f.tokens.rows);
  f.logits = classify_graph(tape, pv, cfg, TokenGraph{f.encoded, f.tokens.meta});
  f.loss = loss_graph(tape, cfg, f.logits, sample.labels, lambda);
  return f;
}

// ---------------------------------------------------------------------------
// Matrix-valued entry points

inline Matrix tim_forward(const ModelConfig& cfg, const ModelParams& params, double t_start, double t_end) {
  if (!(t_start < t_end)) throw InvalidInterval("interval start must precede its end");
  Tape tape;
  auto pv = bind_params(tape, params);
  return tim_graph(tape, pv, cfg, {{t_start, t_end}}).value();
}

inline Matrix embed_tokens(const ModelConfig& cfg, const ModelParams& params, const FeatureSequence& features) {
  Tape tape;
  auto pv = bind_params(tape, params);
  return embed_graph(tape, pv, cfg, features.modality, features.vectors).value();
}

inline TokenSequence build_sequence(const ModelConfig& cfg, const ModelParams& params, const Matrix& tokens_v,
                                    const Matrix& tokens_b, const WindowSchedule& ws, const QuerySchedule& qs) {
  Tape tape;
  auto pv = bind_params(tape, params);
  Var tv = cfg.has_visual() ? tape.constant(tokens_v) : Var{};
  Var tb = cfg.has_brain() ? tape.constant(tokens_b) : Var{};
  auto g = build_sequence_graph(tape, pv, cfg, tv, tb, ws, qs);
  return TokenSequence{g.rows.value(), g.meta};
}

inline TokenSequence encoder_forward(const ModelConfig& cfg, const ModelParams& params, const TokenSequence& x) {
  Tape tape;
  auto pv = bind_params(tape, params);
  Var out = encoder_graph(tape, pv, cfg, tape.constant(x.rows));
  return TokenSequence{out.value(), x.meta};
}

inline Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < logits.cols(); ++c) m = std::max(m, logits(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c) - m);
    for (std::size_t c = 0; c < logits.cols(); ++c) p(r, c) = std::exp(logits(r, c) - m) / z;
  }
  return p;
}

inline std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

struct BranchOutput {
  Matrix logits;
  Matrix probabilities;
};

using Classification = std::map<BranchTask, BranchOutput>;

inline Classification classify(const ModelConfig& cfg, const ModelParams& params, const TokenSequence& encoded) {
  Tape tape;
  auto pv = bind_params(tape, params);
  auto logits = classify_graph(tape, pv, cfg, TokenGraph{tape.constant(encoded.rows), encoded.meta});
  Classification out;
  for (const auto& [key, v] : logits) out.emplace(key, BranchOutput{v.value(), softmax(v.value())});
  return out;
}

struct LossValue {
  double total = 0.0;
  std::optional<double> visual;
  std::optional<double> brain;
  std::map<BranchTask, double> parts;
};

inline double combine_branch_losses(const ModelConfig& cfg, std::optional<double> visual,
                                    std::optional<double> brain, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (cfg.has_visual() && cfg.has_brain()) return visual.value() + lambda * brain.value();
  return cfg.has_visual() ? visual.value() : brain.value();
}

inline LossValue loss(const ModelConfig& cfg, const Classification& logits, const std::vector<QueryLabel>& labels,
                      double lambda) {
  Tape tape;
  std::map<BranchTask, Var> vars;
  for (const auto& [key, out] : logits) vars.emplace(key, tape.constant(out.logits));
  auto g = loss_graph(tape, cfg, vars, labels, lambda);
  LossValue v;
  v.total = g.total.value()[0];
  if (g.visual) v.visual = g.visual->value()[0];
  if (g.brain) v.brain = g.brain->value()[0];
  for (const auto& [key, var] : g.parts) v.parts.emplace(key, var.value()[0]);
  return v;
}

struct Prediction {
  std::map<BranchTask, BranchOutput> outputs;
  LossValue loss;
};

// Inference on one sample without recording gradients.
inline Prediction predict(const ModelConfig& cfg, const ModelParams& params, const Sample& sample,
                          double lambda = 1.0) {
  Tape tape;
  ParamVars pv;
  for (const auto& [name, m] : params.tensors) pv.vars.emplace(name, tape.constant(m));
  auto f = forward_graph(tape, pv, cfg, sample, lambda);
  Prediction p;
  for (const auto& [key, v] : f.logits) p.outputs.emplace(key, BranchOutput{v.value(), softmax(v.value())});
  p.loss.total = f.loss.total.value()[0];
  if (f.loss.visual) p.loss.visual = f.loss.visual->value()[0];
  if (f.loss.brain) p.loss.brain = f.loss.brain->value()[0];
  for (const auto& [key, var] : f.loss.parts) p.loss.parts.emplace(key, var.value()[0]);
  return p;
}

}  // namespace braintim
