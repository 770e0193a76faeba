#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "braintim/actions.hpp"
#include "braintim/error.hpp"
#include "braintim/rng.hpp"
#include "braintim/session.hpp"

namespace braintim {

// Two actions whose class-conditional distributions overlap. rho = 1 makes
// the pair identical in that modality, rho = 0 leaves it fully distinct.
struct ConfusablePair {
  int action_a = 0;
  int action_b = 0;
  double visual_rho = 0.0;
  double brain_rho = 0.0;
};

struct GeneratorSpec {
  std::uint64_t seed = 7;
  int subjects = 20;
  int scenes = 2;
  int sessions_per_subject = 1;
  // Script slots used per session; 0 uses the whole shuffled script.
  int actions_per_session = 24;
  double action_min_s = 2.0;
  double action_max_s = 8.0;
  // Consume-category actions appear this many times in the session script.
  int consume_repeats = 3;

  double video_rate = 4.0;
  double signal_rate = 128.0;
  int channels = 8;
  int height = 4;
  int width = 4;

  double visual_gain = 0.15;
  double visual_noise = 0.2;
  double scene_visual_shift = 0.05;
  double brain_gain = 1.0;
  double brain_noise = 1.0;
  // Amplitude of the component that separates the two members of a
  // confusable pair in the brain stream, scaled by (1 - brain_rho).
  double brain_pair_gain = 2.0;
  // Brain evidence for an action is shifted by this much relative to the
  // visual evidence (negative = earlier).
  double brain_offset_s = 0.0;
  double subject_latency_s = 0.2;
  double subject_gain_jitter = 0.2;

  std::vector<ConfusablePair> confusable_pairs;

  void validate() const {
    if (subjects < 1 || scenes < 1 || sessions_per_subject < 1) {
      throw ConfigError("subjects, scenes and sessions_per_subject must be >= 1");
    }
    if (actions_per_session < 0) throw ConfigError("actions_per_session must be >= 0");
    if (!(action_min_s > 0.0) || action_max_s < action_min_s) {
      throw ConfigError("action durations must satisfy 0 < min <= max");
    }
    if (consume_repeats < 1) throw ConfigError("consume_repeats must be >= 1");
    if (channels < 1 || height < 1 || width < 1) throw ConfigError("stream dimensions must be >= 1");
    if (!(video_rate > 0.0) || !(signal_rate > 0.0)) throw ConfigError("rates must be > 0");
    if (visual_noise < 0.0 || brain_noise < 0.0) throw ConfigError("noise levels must be >= 0");
    for (const auto& p : confusable_pairs) {
      if (p.action_a < 0 || p.action_a >= kActionCount || p.action_b < 0 || p.action_b >= kActionCount ||
          p.action_a == p.action_b) {
        throw ConfigError("confusable pair must name two distinct valid actions");
      }
      if (p.visual_rho < 0.0 || p.visual_rho > 1.0 || p.brain_rho < 0.0 || p.brain_rho > 1.0) {
        throw ConfigError("confusability must lie in [0, 1]");
      }
    }
  }
};

inline int scene_of_subject(const GeneratorSpec& spec, int subject) { return subject % spec.scenes; }

// Session script: every action once, consume actions consume_repeats times.
inline std::vector<int> session_script(const GeneratorSpec& spec) {
  std::vector<int> script;
  for (int a = 0; a < kActionCount; ++a) {
    const int reps = is_consume_action(a) ? spec.consume_repeats : 1;
    for (int r = 0; r < reps; ++r) script.push_back(a);
  }
  return script;
}

// Class-conditional generative model shared by every session of a spec.
class SyntheticWorld {
 public:
  static constexpr int kSpectrumBins = 32;

  explicit SyntheticWorld(GeneratorSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    frame_size_ = static_cast<std::size_t>(spec_.height * spec_.width * 3);
    const auto C = static_cast<std::size_t>(spec_.channels);

    std::vector<std::vector<double>> pattern(kActionCount, std::vector<double>(frame_size_));
    std::vector<std::array<double, kSpectrumBins>> spectrum(kActionCount);
    for (int a = 0; a < kActionCount; ++a) {
      Rng rng(mix_seed({spec_.seed, 0x5649ULL, static_cast<std::uint64_t>(a)}));
      for (auto& v : pattern[static_cast<std::size_t>(a)]) v = rng.coin() ? 1.0 : -1.0;
      spectrum[static_cast<std::size_t>(a)].fill(0.0);
      const int f1 = static_cast<int>(rng.integer(3, 24));
      int f2 = f1;
      while (f2 == f1) f2 = static_cast<int>(rng.integer(3, 24));
      spectrum[static_cast<std::size_t>(a)][static_cast<std::size_t>(f1)] += spec_.brain_gain;
      spectrum[static_cast<std::size_t>(a)][static_cast<std::size_t>(f2)] += spec_.brain_gain;
    }
    for (std::size_t p = 0; p < spec_.confusable_pairs.size(); ++p) {
      const auto& pair = spec_.confusable_pairs[p];
      Rng rng(mix_seed({spec_.seed, 0x5041ULL, p}));
      const int fa = static_cast<int>(rng.integer(3, 24));
      int fb = fa;
      while (fb == fa) fb = static_cast<int>(rng.integer(3, 24));
      spectrum[static_cast<std::size_t>(pair.action_a)][static_cast<std::size_t>(fa)] += spec_.brain_pair_gain;
      spectrum[static_cast<std::size_t>(pair.action_b)][static_cast<std::size_t>(fb)] += spec_.brain_pair_gain;
    }

    visual_pattern_ = pattern;
    brain_spectrum_ = spectrum;
    for (const auto& pair : spec_.confusable_pairs) {
      const auto a = static_cast<std::size_t>(pair.action_a);
      const auto b = static_cast<std::size_t>(pair.action_b);
      for (std::size_t i = 0; i < frame_size_; ++i) {
        const double mid = 0.5 * (pattern[a][i] + pattern[b][i]);
        visual_pattern_[a][i] = (1.0 - pair.visual_rho) * pattern[a][i] + pair.visual_rho * mid;
        visual_pattern_[b][i] = (1.0 - pair.visual_rho) * pattern[b][i] + pair.visual_rho * mid;
      }
      for (std::size_t f = 0; f < kSpectrumBins; ++f) {
        const double mid = 0.5 * (spectrum[a][f] + spectrum[b][f]);
        brain_spectrum_[a][f] = (1.0 - pair.brain_rho) * spectrum[a][f] + pair.brain_rho * mid;
        brain_spectrum_[b][f] = (1.0 - pair.brain_rho) * spectrum[b][f] + pair.brain_rho * mid;
      }
    }

    channel_weight_.assign(static_cast<std::size_t>(kActionCount), std::vector<double>(C));
    for (int a = 0; a < kActionCount; ++a) {
      Rng rng(mix_seed({spec_.seed, 0x4357ULL, static_cast<std::uint64_t>(a)}));
      for (auto& w : channel_weight_[static_cast<std::size_t>(a)]) w = rng.uniform(0.5, 1.5);
    }
  }

  const GeneratorSpec& spec() const { return spec_; }
  std::size_t frame_size() const { return frame_size_; }

  struct SubjectTraits {
    double gain = 1.0;
    double latency = 0.0;
  };
  SubjectTraits subject(int subject_id) const {
    Rng rng(mix_seed({spec_.seed, 0x5355ULL, static_cast<std::uint64_t>(subject_id)}));
    SubjectTraits t;
    t.gain = 1.0 + rng.uniform(-spec_.subject_gain_jitter, spec_.subject_gain_jitter);
    t.latency = rng.uniform(0.0, spec_.subject_latency_s);
    return t;
  }

  struct SceneTraits {
    std::vector<double> background;
    double noise_scale = 1.0;
  };
  SceneTraits scene(int scene_id) const {
    Rng rng(mix_seed({spec_.seed, 0x5343ULL, static_cast<std::uint64_t>(scene_id)}));
    SceneTraits t;
    t.background.resize(frame_size_);
    for (auto& v : t.background) v = rng.normal(0.0, spec_.scene_visual_shift);
    t.noise_scale = 1.0 + rng.uniform(-0.1, 0.1);
    return t;
  }

  // Expected frame for an action before noise and clipping.
  std::vector<double> visual_mean(int action, int subject_id, int scene_id) const {
    const auto st = subject(subject_id);
    const auto sc = scene(scene_id);
    std::vector<double> m(frame_size_);
    const auto& p = visual_pattern_.at(static_cast<std::size_t>(action));
    for (std::size_t i = 0; i < frame_size_; ++i) m[i] = 0.5 + sc.background[i] + st.gain * spec_.visual_gain * p[i];
    return m;
  }

  // One noisy frame in [0, 1], rounded to float precision.
  void draw_frame(const std::vector<double>& mean, Rng& rng, std::span<double> out) const {
    for (std::size_t i = 0; i < frame_size_; ++i) {
      const double v = std::clamp(mean[i] + rng.normal(0.0, spec_.visual_noise), 0.0, 1.0);
      out[i] = static_cast<float>(v);
    }
  }

  const std::array<double, kSpectrumBins>& brain_spectrum(int action) const {
    return brain_spectrum_.at(static_cast<std::size_t>(action));
  }

  Session generate(int subject_id, int scene_id, std::uint64_t session_seed) const {
    Rng rng(mix_seed({spec_.seed, 0x5345ULL, static_cast<std::uint64_t>(subject_id),
                      static_cast<std::uint64_t>(scene_id), session_seed}));
    // Label track: shuffled script, uniform durations at ms resolution.
    const auto base = session_script(spec_);
    const std::size_t slots = spec_.actions_per_session == 0 ? base.size()
                                                             : static_cast<std::size_t>(spec_.actions_per_session);
    std::vector<int> order;
    while (order.size() < slots) {
      auto shuffled = base;
      std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
      order.insert(order.end(), shuffled.begin(), shuffled.end());
    }
    order.resize(slots);

    Session s;
    s.subject_id = static_cast<std::uint32_t>(subject_id);
    s.scene_id = static_cast<std::uint32_t>(scene_id);
    Millis t = 0;
    const Millis min_ms = to_millis(spec_.action_min_s);
    const Millis max_ms = to_millis(spec_.action_max_s);
    for (int a : order) {
      const Millis d = min_ms == max_ms ? min_ms : rng.integer(min_ms, max_ms);
      s.labels.push_back({t, t + d, verb_of(a), a});
      t += d;
    }
    s.timeline = TimelineSpec{t, Rational::from_hz(spec_.video_rate), Rational::from_hz(spec_.signal_rate)};
    s.channels = static_cast<std::uint16_t>(spec_.channels);
    s.height = static_cast<std::uint16_t>(spec_.height);
    s.width = static_cast<std::uint16_t>(spec_.width);

    const auto st = subject(subject_id);
    const auto sc = scene(scene_id);

    // Video: frame n shows the action active at n / f_v.
    RawVideo video{s.timeline.video_rate, static_cast<std::size_t>(spec_.height),
                   static_cast<std::size_t>(spec_.width), {}};
    const auto frames = static_cast<std::size_t>(s.timeline.video_frames());
    video.pixels.resize(frames * frame_size_);
    const double fv = s.timeline.video_rate.hz();
    std::vector<std::vector<double>> means(kActionCount);
    for (std::size_t n = 0; n < frames; ++n) {
      const int a = action_at(s.labels, static_cast<double>(n) / fv);
      auto& m = means[static_cast<std::size_t>(a)];
      if (m.empty()) m = visual_mean(a, subject_id, scene_id);
      draw_frame(m, rng, {video.pixels.data() + n * frame_size_, frame_size_});
    }
    s.video = std::move(video);

    // Signal: white noise plus each segment's spectral signature, shifted by
    // the subject's latency and the global brain offset.
    const auto C = static_cast<std::size_t>(spec_.channels);
    const auto L = static_cast<std::size_t>(s.timeline.signal_samples());
    const double fb = s.timeline.signal_rate.hz();
    Matrix x(C, L);
    const double sigma = spec_.brain_noise * sc.noise_scale;
    for (auto& v : x.data()) v = rng.normal(0.0, sigma);
    const double shift = spec_.brain_offset_s + st.latency;
    for (const auto& seg : s.labels) {
      const double start = to_seconds(seg.start_ms) + shift;
      const double end = to_seconds(seg.end_ms) + shift;
      const auto n0 = static_cast<std::size_t>(std::clamp(std::ceil(start * fb), 0.0, static_cast<double>(L)));
      const auto n1 = static_cast<std::size_t>(std::clamp(std::ceil(end * fb), 0.0, static_cast<double>(L)));
      if (n0 >= n1) continue;
      const auto& spectrum = brain_spectrum(seg.action);
      const auto& weights = channel_weight_[static_cast<std::size_t>(seg.action)];
      for (std::size_t f = 0; f < kSpectrumBins; ++f) {
        const double amp = spectrum[f] * st.gain;
        if (amp == 0.0) continue;
        const double w = 2.0 * std::numbers::pi * static_cast<double>(f) / fb;
        for (std::size_t c = 0; c < C; ++c) {
          const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double a = amp * weights[c];
          for (std::size_t n = n0; n < n1; ++n) x(c, n) += a * std::sin(w * static_cast<double>(n) + phase);
        }
      }
    }
    for (auto& v : x.data()) v = static_cast<float>(v);
    s.signal = RawSignal{s.timeline.signal_rate, std::move(x)};
    return s;
  }

 private:
  static int action_at(const LabelTrack& labels, double t) {
    for (const auto& l : labels) {
      if (t < to_seconds(l.end_ms)) return l.action;
    }
    return labels.back().action;
  }

  GeneratorSpec spec_;
  std::size_t frame_size_ = 0;
  std::vector<std::vector<double>> visual_pattern_;
  std::vector<std::array<double, kSpectrumBins>> brain_spectrum_;
  std::vector<std::vector<double>> channel_weight_;
};

inline Session generate_session(const GeneratorSpec& spec, int subject_id, int scene_id,
                                std::uint64_t session_seed) {
  return SyntheticWorld(spec).generate(subject_id, scene_id, session_seed);
}

struct SessionEntry {
  int session_index = 0;
  Session session;
};

// Every (subject, session) of the spec; subject s records in scene s % scenes.
inline std::vector<SessionEntry> generate_dataset(const GeneratorSpec& spec) {
  SyntheticWorld world(spec);
  std::vector<SessionEntry> out;
  for (int s = 0; s < spec.subjects; ++s) {
    for (int k = 0; k < spec.sessions_per_subject; ++k) {
      out.push_back({k, world.generate(s, scene_of_subject(spec, s), static_cast<std::uint64_t>(k))});
    }
  }
  return out;
}

}  // namespace braintim
