#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "braintim/actions.hpp"
#include "braintim/model.hpp"
#include "braintim/sample.hpp"
#include "braintim/session.hpp"
#include "braintim/train.hpp"

namespace braintim::testing {

// A sample with N windows of 2 s stepping 1 s, Gaussian features and random
// labels; roughly one query in five is background.
inline Sample random_sample(const ModelConfig& cfg, int n_windows, std::mt19937_64& rng, double background = 0.2) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Sample s;
  const WindowSchedule ws{2000, 1000, n_windows};
  s.duration = to_seconds((n_windows - 1) * 1000 + 2000);
  s.visual = {Modality::Visual, Matrix(static_cast<std::size_t>(n_windows), static_cast<std::size_t>(cfg.visual_dim)), ws};
  s.brain = {Modality::Brain, Matrix(static_cast<std::size_t>(n_windows), static_cast<std::size_t>(cfg.brain_dim)), ws};
  for (auto& v : s.visual.vectors.data()) v = normal(rng);
  for (auto& v : s.brain.vectors.data()) v = normal(rng);
  for (int j = 0; j < cfg.queries; ++j) {
    if (u(rng) < background) {
      s.labels.push_back({});
    } else {
      const int a = std::uniform_int_distribution<int>(0, kActionCount - 1)(rng);
      s.labels.push_back({verb_of(a), a});
    }
  }
  return s;
}

// A valid session with random header, labels and any subset of the four
// payload blocks. Stream values are float-representable so the container
// round trip can be exact.
inline Session random_session(std::mt19937_64& rng) {
  auto uni = [&](auto lo, auto hi) { return std::uniform_int_distribution<decltype(lo + hi)>(lo, hi)(rng); };
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Session s;
  s.subject_id = uni(0u, 100000u);
  s.scene_id = uni(0u, 50u);
  s.channels = static_cast<std::uint16_t>(uni(1, 6));
  s.height = static_cast<std::uint16_t>(uni(1, 4));
  s.width = static_cast<std::uint16_t>(uni(1, 4));
  s.timeline = TimelineSpec{uni(Millis{500}, Millis{12000}), Rational::make(uni(1u, 60000u), uni(1u, 1001u)),
                            Rational::make(uni(1u, 512u), uni(1u, 3u))};
  // Keep streams small: cap the rates' sample counts.
  while (s.timeline.video_frames() > 400) s.timeline.video_rate = Rational::make(s.timeline.video_rate.num, s.timeline.video_rate.den * 2);
  Millis t = 0;
  while (true) {
    t += uni(Millis{0}, Millis{800});
    const Millis d = uni(Millis{1}, Millis{3000});
    if (t + d > s.timeline.duration_ms) break;
    const int a = uni(0, kActionCount - 1);
    s.labels.push_back({t, t + d, verb_of(a), a});
    t += d;
  }
  if (uni(0, 1)) {
    RawVideo v{s.timeline.video_rate, s.height, s.width, {}};
    v.pixels.resize(static_cast<std::size_t>(s.timeline.video_frames()) * v.frame_size());
    for (auto& x : v.pixels) x = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    s.video = std::move(v);
  }
  if (uni(0, 1)) {
    Matrix m(s.channels, static_cast<std::size_t>(s.timeline.signal_samples()));
    for (auto& x : m.data()) x = normal(rng);
    s.signal = RawSignal{s.timeline.signal_rate, std::move(m)};
  }
  for (auto mod : {Modality::Visual, Modality::Brain}) {
    if (!uni(0, 1)) continue;
    const Millis window = uni(Millis{1}, s.timeline.duration_ms);
    const auto ws = make_window_schedule(s.timeline.duration_ms, window, uni(Millis{1}, Millis{2000}));
    Matrix m(static_cast<std::size_t>(ws.count), static_cast<std::size_t>(uni(1, 8)));
    for (auto& x : m.data()) x = normal(rng);
    (mod == Modality::Visual ? s.visual_features : s.brain_features) = FeatureSequence{mod, std::move(m), ws};
  }
  return s;
}

inline ModelParams perturbed(const ModelParams& p, double scale, std::uint64_t seed) {
  ModelParams q = p;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, m] : q.tensors) {
    for (auto& v : m.data()) v += n(rng);
  }
  return q;
}

struct GroupError {
  std::string name;
  double rel_error = 0.0;
  double analytic_norm = 0.0;
};

// Per-tensor relative error ||a - n|| / max(||a||, ||n||, floor) between the
// tape gradient and central differences of the loss. The floor sits above
// the difference-quotient rounding noise (~1e-10) so groups whose gradient is
// identically zero, such as attention key biases, do not divide noise by
// noise.
inline std::vector<GroupError> gradient_check(const ModelConfig& cfg, const ModelParams& params, const Sample& sample,
                                              double lambda, double step = 1e-5, double floor = 1e-5) {
  const auto analytic = compute_gradients(cfg, params, sample, lambda).gradients;
  std::vector<GroupError> out;
  ModelParams work = params;
  for (auto& [name, m] : work.tensors) {
    const Matrix& a = analytic.at(name);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double orig = m[i];
      m[i] = orig + step;
      const double lp = predict(cfg, work, sample, lambda).loss.total;
      m[i] = orig - step;
      const double lm = predict(cfg, work, sample, lambda).loss.total;
      m[i] = orig;
      const double num = (lp - lm) / (2 * step);
      diff2 += (a[i] - num) * (a[i] - num);
      a2 += a[i] * a[i];
      n2 += num * num;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), floor});
    out.push_back({name, std::sqrt(diff2) / scale, std::sqrt(a2)});
  }
  return out;
}

inline double max_error(const std::vector<GroupError>& errs) {
  double m = 0.0;
  for (const auto& e : errs) m = std::max(m, e.rel_error);
  return m;
}

}  // namespace braintim::testing
