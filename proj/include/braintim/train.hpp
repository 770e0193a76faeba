#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "braintim/autodiff.hpp"
#include "braintim/dataset.hpp"
#include "braintim/error.hpp"
#include "braintim/metrics.hpp"
#include "braintim/model.hpp"
#include "braintim/rng.hpp"
#include "braintim/sample.hpp"

namespace braintim {

enum class OptimizerKind { Sgd, Adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct TrainConfig {
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 4;
  int epochs = 40;
  std::uint64_t seed = 1;
  double lambda = 1.0;
  // Validation is evaluated every `eval_every` epochs and after the last one.
  int eval_every = 1;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Gradients

// One recorded forward pass. backward() may be called once, after run().
class ForwardPass {
 public:
  ForwardPass(const ModelConfig& cfg, const ModelParams& params) : cfg_(cfg), tape_(std::make_unique<Tape>()) {
    pv_ = bind_params(*tape_, params);
  }

  const ForwardGraph& run(const Sample& sample, double lambda) {
    if (graph_) throw StateError("forward pass already recorded");
    graph_ = forward_graph(*tape_, pv_, cfg_, sample, lambda);
    return *graph_;
  }

  Gradients backward() {
    if (!graph_) throw StateError("backward called before a forward pass");
    tape_->backward(graph_->loss.total);
    return collect_gradients(*tape_, pv_);
  }

  const ForwardGraph& graph() const {
    if (!graph_) throw StateError("no forward pass recorded");
    return *graph_;
  }

 private:
  ModelConfig cfg_;
  std::unique_ptr<Tape> tape_;
  ParamVars pv_;
  std::optional<ForwardGraph> graph_;
};

struct GradientResult {
  LossValue loss;
  Gradients gradients;
  std::map<BranchTask, std::vector<int>> predicted;
};

inline LossValue loss_values(const LossGraph& g) {
  LossValue v;
  v.total = g.total.value()[0];
  if (g.visual) v.visual = g.visual->value()[0];
  if (g.brain) v.brain = g.brain->value()[0];
  for (const auto& [key, var] : g.parts) v.parts.emplace(key, var.value()[0]);
  return v;
}

inline GradientResult compute_gradients(const ModelConfig& cfg, const ModelParams& params, const Sample& sample,
                                        double lambda) {
  ForwardPass pass(cfg, params);
  const auto& g = pass.run(sample, lambda);
  GradientResult r;
  r.loss = loss_values(g.loss);
  if (!std::isfinite(r.loss.total)) throw NumericError("non-finite training loss");
  for (const auto& [key, v] : g.logits) r.predicted.emplace(key, argmax_rows(v.value()));
  r.gradients = pass.backward();
  return r;
}

// ---------------------------------------------------------------------------
// Optimizers

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ModelParams& params, const Gradients& grads) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}

  void step(ModelParams& params, const Gradients& grads) override {
    for (const auto& [name, g] : grads) {
      Matrix& p = params.at(name);
      if (!p.same_shape(g)) throw ShapeError("gradient shape mismatch for " + name);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
    }
  }

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ModelParams& params, const Gradients& grads) override {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
      Matrix& p = params.at(name);
      if (!p.same_shape(g)) throw ShapeError("gradient shape mismatch for " + name);
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.size() == 0) {
        m = Matrix(p.rows(), p.cols());
        v = Matrix(p.rows(), p.cols());
      }
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
        v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        p[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Matrix> m_, v_;
};

inline std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& tc) {
  if (tc.optimizer == OptimizerKind::Sgd) return std::make_unique<Sgd>(tc.learning_rate);
  return std::make_unique<Adam>(tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon);
}

// ---------------------------------------------------------------------------
// Evaluation over a set of samples

struct SplitMetrics {
  std::map<BranchTask, double> loss;
  std::map<BranchTask, double> accuracy;
  std::map<BranchTask, PredictionSet> predictions;
  double total_loss = 0.0;
};

// Per-sample mean cross-entropies averaged over samples; accuracies pooled
// over every unmasked query.
class MetricAccumulator {
 public:
  void add(const LossValue& loss, const std::map<BranchTask, std::vector<int>>& predicted,
           const std::vector<QueryLabel>& labels) {
    ++samples_;
    total_ += loss.total;
    for (const auto& [key, v] : loss.parts) loss_[key] += v;
    for (const auto& [key, pred] : predicted) {
      auto& set = sets_[key];
      const auto lab = task_labels(labels, key.second);
      set.predicted.insert(set.predicted.end(), pred.begin(), pred.end());
      set.labels.insert(set.labels.end(), lab.begin(), lab.end());
    }
  }

  SplitMetrics finish() const {
    SplitMetrics m;
    const double n = samples_ == 0 ? 1.0 : static_cast<double>(samples_);
    m.total_loss = total_ / n;
    for (const auto& [key, v] : loss_) m.loss[key] = v / n;
    for (const auto& [key, set] : sets_) m.accuracy[key] = top1_accuracy(set.predicted, set.labels);
    m.predictions = sets_;
    return m;
  }

 private:
  std::size_t samples_ = 0;
  double total_ = 0.0;
  std::map<BranchTask, double> loss_;
  std::map<BranchTask, PredictionSet> sets_;
};

inline SplitMetrics evaluate(const ModelConfig& cfg, const ModelParams& params, const std::vector<Sample>& samples,
                             const std::vector<std::size_t>& indices, double lambda) {
  MetricAccumulator acc;
  for (auto i : indices) {
    const auto p = predict(cfg, params, samples.at(i), lambda);
    std::map<BranchTask, std::vector<int>> predicted;
    for (const auto& [key, out] : p.outputs) predicted.emplace(key, argmax_rows(out.logits));
    acc.add(p.loss, predicted, samples[i].labels);
  }
  return acc.finish();
}

// ---------------------------------------------------------------------------
// Training loop

struct LogRow {
  int epoch = 0;
  std::string split;
  Task task = Task::Action;
  Modality branch = Modality::Visual;
  double loss = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const LogRow&, const LogRow&) = default;
};

inline constexpr const char* kLogHeader = "epoch,split,task,branch,loss,accuracy";

inline void write_log_row(std::ostream& os, const LogRow& r) {
  char buf[64];
  os << r.epoch << "," << r.split << "," << to_string(r.task) << "," << to_string(r.branch) << ",";
  std::snprintf(buf, sizeof buf, "%.17g", r.loss);
  os << buf << ",";
  std::snprintf(buf, sizeof buf, "%.17g", r.accuracy);
  os << buf << "\n";
}

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<LogRow> log;
  // Mean training loss per epoch (1-based epochs at index epoch - 1).
  std::vector<double> train_loss;
  SplitMetrics train;
  SplitMetrics val;
  SplitMetrics test;
  ModelParams params;

  double test_accuracy(Modality branch, Task task) const { return test.accuracy.at({branch, task}); }
};

inline void append_rows(std::vector<LogRow>& log, int epoch, const std::string& split, const SplitMetrics& m) {
  for (const auto& [key, acc] : m.accuracy) log.push_back({epoch, split, key.second, key.first, m.loss.at(key), acc});
}

inline void add_scaled(Gradients& into, const Gradients& g, double s) {
  for (const auto& [name, m] : g) {
    auto [it, fresh] = into.try_emplace(name, m.rows(), m.cols());
    Matrix& dst = it->second;
    for (std::size_t i = 0; i < m.size(); ++i) dst[i] += s * m[i];
  }
}

// Deterministic in (samples, partition, configs, seed): parameter init and
// epoch shuffles draw from streams derived from the seed only.
inline RunResult train_run(const std::vector<Sample>& samples, const Partition& part, const ModelConfig& cfg,
                           const TrainConfig& tc, std::ostream* log = nullptr) {
  cfg.validate();
  tc.validate();
  if (part.train.empty()) throw ConfigError("training partition is empty");
  if (part.val.empty()) throw ConfigError("validation partition is empty");
  if (part.test.empty()) throw ConfigError("test partition is empty");

  RunResult result;
  result.seed = tc.seed;
  result.params = init_params(cfg, tc.seed);
  auto opt = make_optimizer(tc);
  if (log) *log << kLogHeader << "\n";
  auto emit = [&](std::size_t from) {
    if (!log) return;
    for (std::size_t i = from; i < result.log.size(); ++i) write_log_row(*log, result.log[i]);
    log->flush();
  };

  std::vector<std::size_t> order = part.train;
  const auto bs = static_cast<std::size_t>(tc.batch_size);
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng rng(mix_seed({tc.seed, 0x45504f4348ULL, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng.engine());
    MetricAccumulator running;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      const double w = 1.0 / static_cast<double>(e - b);
      Gradients batch;
      for (std::size_t k = b; k < e; ++k) {
        const Sample& s = samples.at(order[k]);
        auto r = compute_gradients(cfg, result.params, s, tc.lambda);
        running.add(r.loss, r.predicted, s.labels);
        add_scaled(batch, r.gradients, w);
      }
      opt->step(result.params, batch);
    }
    if (!result.params.all_finite()) throw NumericError("parameters became non-finite at epoch " + std::to_string(epoch));
    const auto tm = running.finish();
    result.train_loss.push_back(tm.total_loss);
    const std::size_t from = result.log.size();
    append_rows(result.log, epoch, "train", tm);
    if (epoch % tc.eval_every == 0 || epoch == tc.epochs) {
      append_rows(result.log, epoch, "val", evaluate(cfg, result.params, samples, part.val, tc.lambda));
    }
    emit(from);
  }

  result.train = evaluate(cfg, result.params, samples, part.train, tc.lambda);
  result.val = evaluate(cfg, result.params, samples, part.val, tc.lambda);
  result.test = evaluate(cfg, result.params, samples, part.test, tc.lambda);
  const std::size_t from = result.log.size();
  append_rows(result.log, tc.epochs, "test", result.test);
  emit(from);
  return result;
}

// ---------------------------------------------------------------------------
// Seed sweeps

struct SweepResult {
  std::vector<RunResult> runs;
  std::map<BranchTask, MeanStd> test_accuracy;
  std::vector<std::string> warnings;
};

inline std::map<BranchTask, MeanStd> aggregate_accuracy(const std::vector<std::map<BranchTask, double>>& per_seed) {
  std::map<BranchTask, std::vector<double>> cols;
  for (const auto& m : per_seed) {
    for (const auto& [key, v] : m) cols[key].push_back(v);
  }
  std::map<BranchTask, MeanStd> out;
  for (const auto& [key, xs] : cols) out.emplace(key, mean_std(xs));
  return out;
}

inline SweepResult run_seed_sweep(const std::vector<Sample>& samples, const Partition& part, const ModelConfig& cfg,
                                  TrainConfig tc, const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() < 2) throw ConfigError("a seed sweep needs at least 2 seeds");
  SweepResult sweep;
  std::set<std::uint64_t> seen;
  for (auto s : seeds) {
    if (!seen.insert(s).second) sweep.warnings.push_back("duplicate seed " + std::to_string(s));
  }
  std::vector<std::map<BranchTask, double>> per_seed;
  for (auto s : seeds) {
    tc.seed = s;
    sweep.runs.push_back(train_run(samples, part, cfg, tc));
    per_seed.push_back(sweep.runs.back().test.accuracy);
  }
  sweep.test_accuracy = aggregate_accuracy(per_seed);
  return sweep;
}

}  // namespace braintim
