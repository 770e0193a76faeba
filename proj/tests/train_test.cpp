#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "braintim/dataset.hpp"
#include "braintim/features.hpp"
#include "braintim/generator.hpp"
#include "braintim/train.hpp"
#include "support.hpp"

using namespace braintim;
using braintim::testing::random_sample;

namespace {

ModelConfig small_model(Fusion f = Fusion::Temporal) {
  ModelConfig c;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.ffn_dim = 16;
  c.queries = 4;
  c.visual_dim = 6;
  c.brain_dim = 5;
  c.fusion = f;
  return c;
}

std::vector<Sample> random_samples(const ModelConfig& cfg, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) out.push_back(random_sample(cfg, 5, rng));
  return out;
}

Partition all_in_every_split(std::size_t n) {
  Partition p;
  for (std::size_t i = 0; i < n; ++i) p.train.push_back(i);
  p.val = p.train;
  p.test = p.train;
  return p;
}

// Brain CLS tokens and the brain modality vector also reach visual logits
// through attention; only the brain heads depend on L_b alone.
bool brain_only_param(const std::string& name) { return name.rfind("head.brain.", 0) == 0; }

// The overfit dataset: 8 generated sessions, features from the stand-in
// encoders, Q = 4.
struct OverfitRun {
  ModelConfig cfg;
  RunResult result;

  static const OverfitRun& get() {
    static const OverfitRun run = [] {
      GeneratorSpec g;
      g.subjects = 8;
      g.actions_per_session = 8;
      g.action_min_s = 3;
      g.action_max_s = 5;
      FeatureConfig fc;
      fc.visual.out_dim = 8;
      fc.brain.out_dim = 8;
      OverfitRun r;
      r.cfg = small_model();
      r.cfg.visual_dim = r.cfg.brain_dim = 8;
      std::vector<Sample> samples;
      for (const auto& e : generate_dataset(g)) samples.push_back(make_sample(e.session, fc, r.cfg.queries));
      TrainConfig tc;
      tc.learning_rate = 3e-3;
      tc.epochs = 200;
      tc.eval_every = 50;
      r.result = train_run(samples, all_in_every_split(samples.size()), r.cfg, tc);
      return r;
    }();
    return run;
  }
};

}  // namespace

TEST(Sgd, StepMatchesHandComputation) {
  // L(a, b) = (a b - 1)^2 so dL/da = 2 (a b - 1) b and dL/db = 2 (a b - 1) a.
  ModelParams p;
  p.tensors.emplace("a", Matrix(1, 1, 1.5));
  p.tensors.emplace("b", Matrix(1, 1, -0.5));
  Tape t;
  const auto pv = bind_params(t, p);
  Var prod = t.matmul(pv.at("a"), pv.at("b"));
  Var r = t.add(prod, t.constant(Matrix(1, 1, -1.0)));
  t.backward(t.matmul(r, r));
  const Gradients g = collect_gradients(t, pv);
  const double a = 1.5, b = -0.5, lr = 0.1;
  EXPECT_EQ(g.at("a")[0], 2 * (a * b - 1) * b);
  EXPECT_EQ(g.at("b")[0], 2 * (a * b - 1) * a);
  Sgd(lr).step(p, g);
  EXPECT_EQ(p.at("a")[0], a - lr * (2 * (a * b - 1) * b));
  EXPECT_EQ(p.at("b")[0], b - lr * (2 * (a * b - 1) * a));
}

TEST(Optimizers, ZeroLearningRateLeavesParametersIdentical) {
  const auto cfg = small_model();
  auto p = init_params(cfg, 1);
  const auto before = p;
  std::mt19937_64 rng(1);
  const auto g = compute_gradients(cfg, p, random_sample(cfg, 4, rng), 1.0).gradients;
  Sgd(0.0).step(p, g);
  Adam(0.0, 0.9, 0.999, 1e-8).step(p, g);
  for (const auto& [name, m] : before.tensors) EXPECT_EQ(p.at(name).data(), m.data()) << name;
}

TEST(Backward, HeadBiasGradientMatchesFiniteDifferences) {
  const auto cfg = small_model();
  const auto p = braintim::testing::perturbed(init_params(cfg, 2), 0.1, 2);
  std::mt19937_64 rng(2);
  const auto s = random_sample(cfg, 4, rng);
  for (const auto& e : braintim::testing::gradient_check(cfg, p, s, 1.0)) {
    if (e.name.rfind("head.visual.", 0) == 0 && e.name.find(".bias") != std::string::npos) {
      EXPECT_LT(e.rel_error, 1e-4) << e.name;
    }
  }
}

TEST(Backward, LambdaZeroZeroesBrainHeadGradients) {
  const auto cfg = small_model();
  const auto p = braintim::testing::perturbed(init_params(cfg, 3), 0.1, 3);
  std::mt19937_64 rng(3);
  const auto g = compute_gradients(cfg, p, random_sample(cfg, 4, rng), 0.0).gradients;
  for (const auto& [name, m] : g) {
    if (name.rfind("head.brain.", 0) != 0) continue;
    for (double v : m.data()) EXPECT_EQ(v, 0.0) << name;
  }
}

TEST(Backward, DoublingLambdaDoublesBrainOnlyGradients) {
  const auto cfg = small_model();
  const auto p = braintim::testing::perturbed(init_params(cfg, 4), 0.1, 4);
  std::mt19937_64 rng(4);
  const auto s = random_sample(cfg, 4, rng);
  const auto g1 = compute_gradients(cfg, p, s, 0.4).gradients;
  const auto g2 = compute_gradients(cfg, p, s, 0.8).gradients;
  int checked = 0;
  for (const auto& [name, m] : g1) {
    if (!brain_only_param(name)) continue;
    ++checked;
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(g2.at(name)[i], 2 * m[i], 1e-12 + 1e-10 * std::abs(m[i]));
  }
  EXPECT_EQ(checked, 4);
}

TEST(Backward, ToggledOffGroupsHaveNoGradientEntries) {
  auto cfg = small_model();
  cfg.use_tim = false;
  cfg.use_modality = false;
  std::mt19937_64 rng(5);
  const auto g = compute_gradients(cfg, init_params(cfg, 5), random_sample(cfg, 4, rng), 1.0).gradients;
  for (const auto& [name, m] : g) {
    EXPECT_NE(name.rfind("tim.", 0), 0u) << name;
    EXPECT_NE(name.rfind("modality.", 0), 0u) << name;
  }
  EXPECT_EQ(g.size(), param_layout(cfg).size());
}

TEST(Backward, MaskedQueryLabelsContributeNothing) {
  const auto cfg = small_model();
  const auto p = braintim::testing::perturbed(init_params(cfg, 6), 0.1, 6);
  std::mt19937_64 rng(6);
  auto s = random_sample(cfg, 4, rng, 0.0);
  s.labels[1] = {};
  const auto g1 = compute_gradients(cfg, p, s, 1.0).gradients;
  // A background action masks the query; whatever sits in its verb slot is
  // ignored.
  for (int verb : {0, 4, 9}) {
    auto s2 = s;
    s2.labels[1].verb = verb;
    const auto g2 = compute_gradients(cfg, p, s2, 1.0).gradients;
    for (const auto& [name, m] : g1) EXPECT_EQ(g2.at(name).data(), m.data()) << name;
  }
  auto s3 = s;
  s3.labels[1] = {verb_of(5), 5};
  const auto g3 = compute_gradients(cfg, p, s3, 1.0).gradients;
  EXPECT_NE(g3.at("head.visual.action.bias").data(), g1.at("head.visual.action.bias").data());
}

TEST(Backward, BeforeForwardIsStateError) {
  const auto cfg = small_model();
  ForwardPass pass(cfg, init_params(cfg, 7));
  EXPECT_THROW(pass.backward(), StateError);
  EXPECT_THROW(pass.graph(), StateError);
}

TEST(TrainRun, DeterministicForIdenticalSeed) {
  const auto cfg = small_model();
  const auto samples = random_samples(cfg, 6, 8);
  const auto part = all_in_every_split(samples.size());
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  std::ostringstream log1, log2;
  const auto a = train_run(samples, part, cfg, tc, &log1);
  const auto b = train_run(samples, part, cfg, tc, &log2);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(log1.str(), log2.str());
  for (const auto& [name, m] : a.params.tensors) EXPECT_EQ(b.params.at(name).data(), m.data());
}

TEST(TrainRun, DifferentSeedsGiveDifferentParameters) {
  const auto cfg = small_model();
  const auto samples = random_samples(cfg, 4, 9);
  const auto part = all_in_every_split(samples.size());
  TrainConfig tc;
  tc.epochs = 1;
  const auto a = train_run(samples, part, cfg, tc);
  tc.seed = 2;
  const auto b = train_run(samples, part, cfg, tc);
  EXPECT_NE(a.params.at("encoder.0.attn.query.weight").data(), b.params.at("encoder.0.attn.query.weight").data());
}

TEST(TrainRun, EmptyPartitionIsConfigError) {
  const auto cfg = small_model();
  const auto samples = random_samples(cfg, 3, 10);
  TrainConfig tc;
  tc.epochs = 1;
  Partition p = all_in_every_split(3);
  p.val.clear();
  EXPECT_THROW(train_run(samples, p, cfg, tc), ConfigError);
  p = all_in_every_split(3);
  p.train.clear();
  EXPECT_THROW(train_run(samples, p, cfg, tc), ConfigError);
}

TEST(TrainRun, LogHasHeaderAndRowsPerSplit) {
  const auto cfg = small_model(Fusion::VisualOnly);
  const auto samples = random_samples(cfg, 3, 11);
  TrainConfig tc;
  tc.epochs = 2;
  std::ostringstream log;
  const auto r = train_run(samples, all_in_every_split(3), cfg, tc, &log);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kLogHeader);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  // 2 tasks x (2 train epochs + 2 val epochs + 1 test).
  EXPECT_EQ(rows, 10);
  EXPECT_EQ(static_cast<std::size_t>(rows), r.log.size());
  for (const auto& row : r.log) {
    EXPECT_TRUE(std::isfinite(row.loss));
    EXPECT_GE(row.accuracy, 0.0);
    EXPECT_LE(row.accuracy, 1.0);
  }
}

TEST(TrainRun, InvalidTrainConfig) {
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = {};
  tc.lambda = -1;
  EXPECT_THROW(tc.validate(), ConfigError);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

TEST(Overfit, EightSessionsReachNinetyNinePercent) {
  const auto& run = OverfitRun::get();
  EXPECT_GE(run.result.train.accuracy.at({Modality::Visual, Task::Action}), 0.99);
}

TEST(Overfit, SmoothedLossNonIncreasingAfterEpochTwenty) {
  const auto& loss = OverfitRun::get().result.train_loss;
  ASSERT_EQ(loss.size(), 200u);
  auto smooth = [&](std::size_t end) {
    double s = 0;
    for (std::size_t i = end - 5; i < end; ++i) s += loss[i];
    return s / 5;
  };
  // Disjoint 5-epoch windows starting at epoch 21.
  for (std::size_t end = 30; end <= loss.size(); end += 5) {
    EXPECT_LE(smooth(end), smooth(end - 5)) << "epochs " << end - 4 << "-" << end;
  }
}

TEST(SeedSweep, ClosedFormMeanAndStd) {
  const std::map<BranchTask, double> a{{{Modality::Visual, Task::Action}, 0.6}};
  const std::map<BranchTask, double> b{{{Modality::Visual, Task::Action}, 0.7}};
  const auto agg = aggregate_accuracy({a, b});
  const auto& ms = agg.at({Modality::Visual, Task::Action});
  EXPECT_NEAR(ms.mean, 0.65, 1e-12);
  EXPECT_NEAR(ms.std, std::sqrt(0.005), 1e-12);
  EXPECT_NEAR(ms.std, 0.0707, 1e-4);
  const auto same = aggregate_accuracy({a, a, a});
  EXPECT_EQ(same.at({Modality::Visual, Task::Action}).std, 0.0);
}

TEST(SeedSweep, RetainsEveryRunAndWarnsOnDuplicates) {
  const auto cfg = small_model(Fusion::BrainOnly);
  const auto samples = random_samples(cfg, 2, 12);
  TrainConfig tc;
  tc.epochs = 1;
  const auto part = all_in_every_split(2);
  const auto sweep = run_seed_sweep(samples, part, cfg, tc, {1, 2, 3, 4, 5});
  EXPECT_EQ(sweep.runs.size(), 5u);
  EXPECT_TRUE(sweep.warnings.empty());
  EXPECT_EQ(sweep.test_accuracy.at({Modality::Brain, Task::Action}).n, 5u);
  const auto dup = run_seed_sweep(samples, part, cfg, tc, {3, 3});
  EXPECT_EQ(dup.runs.size(), 2u);
  ASSERT_EQ(dup.warnings.size(), 1u);
  EXPECT_NE(dup.warnings[0].find("3"), std::string::npos);
  EXPECT_THROW(run_seed_sweep(samples, part, cfg, tc, {1}), ConfigError);
}
