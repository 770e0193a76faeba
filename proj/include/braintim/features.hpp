#pragma once

#include <cstdint>
#include <utility>

#include "braintim/error.hpp"
#include "braintim/sample.hpp"
#include "braintim/session.hpp"
#include "braintim/signal.hpp"
#include "braintim/timeline.hpp"

namespace braintim {

struct Preprocessing {
  double low_hz = 0.5;
  double high_hz = 50.0;
  Rational target_rate = Rational::make(64, 1);
};

struct FeatureConfig {
  double window_s = 2.0;
  double step_s = 2.0;
  int frames_per_window = 4;
  EncoderSpec visual{EncoderKind::SyntheticVideo, 32, 11};
  EncoderSpec brain{EncoderKind::SyntheticSignal, 16, 13};
  Preprocessing preprocessing;
};

// Band-pass first, then decimate.
inline RawSignal preprocess_signal(const RawSignal& raw, const Preprocessing& p) {
  return downsample(bandpass_filter(raw, p.low_hz, p.high_hz), p.target_rate);
}

namespace detail {

inline bool usable_cache(const std::optional<FeatureSequence>& f, const WindowSchedule& s, int dim) {
  return f && f->schedule == s && f->vectors.rows() == static_cast<std::size_t>(s.count) &&
         f->vectors.cols() == static_cast<std::size_t>(dim);
}

// Features are stored as f32 on disk; rounding here keeps freshly extracted
// and cached features identical.
inline void round_to_float(Matrix& m) {
  for (auto& v : m.data()) v = static_cast<float>(v);
}

}  // namespace detail

// Row i of both sequences encodes window i of `schedule`. Cached features in
// the session are reused when their schedule and width match; a precomputed
// encoder requires them.
inline std::pair<FeatureSequence, FeatureSequence> extract_features(const Session& session,
                                                                    const WindowSchedule& schedule, int frames,
                                                                    const EncoderSpec& enc_v,
                                                                    const EncoderSpec& enc_b,
                                                                    const Preprocessing& pre = {}) {
  if (schedule.count != window_count_ms(session.timeline.duration_ms, schedule.window_ms, schedule.step_ms)) {
    throw InvalidSchedule("window schedule does not match the session timeline");
  }
  const auto n = static_cast<std::size_t>(schedule.count);

  FeatureSequence visual{Modality::Visual, {}, schedule};
  if (detail::usable_cache(session.visual_features, schedule, enc_v.out_dim) &&
      (enc_v.kind == EncoderKind::Precomputed || !session.video)) {
    visual = *session.visual_features;
  } else {
    if (enc_v.kind == EncoderKind::Precomputed) throw DataError("session has no matching cached visual features");
    if (!session.video) throw DataError("session has neither video nor cached visual features");
    VideoEncoder enc(enc_v, session.video->frame_size(), frames);
    visual.vectors = Matrix(n, static_cast<std::size_t>(enc_v.out_dim));
    for (std::size_t i = 0; i < n; ++i) {
      const auto [t0, t1] = window_interval(schedule, static_cast<std::int64_t>(i + 1));
      const auto e = enc.encode(*session.video, t0, t1 - t0);
      std::copy(e.begin(), e.end(), visual.vectors.row_span(i).begin());
    }
    detail::round_to_float(visual.vectors);
  }

  FeatureSequence brain{Modality::Brain, {}, schedule};
  if (detail::usable_cache(session.brain_features, schedule, enc_b.out_dim) &&
      (enc_b.kind == EncoderKind::Precomputed || !session.signal)) {
    brain = *session.brain_features;
  } else {
    if (enc_b.kind == EncoderKind::Precomputed) throw DataError("session has no matching cached brain features");
    if (!session.signal) throw DataError("session has neither signal nor cached brain features");
    const RawSignal clean = preprocess_signal(*session.signal, pre);
    SignalEncoder enc(enc_b, clean.rate, schedule.window());
    brain.vectors = Matrix(n, static_cast<std::size_t>(enc_b.out_dim));
    for (std::size_t i = 0; i < n; ++i) {
      const auto [t0, t1] = window_interval(schedule, static_cast<std::int64_t>(i + 1));
      const auto e = enc.encode(clean, t0);
      std::copy(e.begin(), e.end(), brain.vectors.row_span(i).begin());
    }
    detail::round_to_float(brain.vectors);
  }

  if (visual.vectors.rows() != brain.vectors.rows()) throw ShapeError("visual and brain row counts differ");
  if (!visual.vectors.all_finite() || !brain.vectors.all_finite()) throw NumericError("non-finite window feature");
  return {std::move(visual), std::move(brain)};
}

inline WindowSchedule feature_schedule(const Session& session, const FeatureConfig& cfg) {
  return make_window_schedule(session.timeline.duration_ms, to_millis(cfg.window_s), to_millis(cfg.step_s));
}

inline std::pair<FeatureSequence, FeatureSequence> extract_features(const Session& session,
                                                                    const FeatureConfig& cfg) {
  return extract_features(session, feature_schedule(session, cfg), cfg.frames_per_window, cfg.visual, cfg.brain,
                          cfg.preprocessing);
}

// Stores freshly extracted features in the session so the container caches them.
inline void cache_features(Session& session, const FeatureConfig& cfg) {
  auto [v, b] = extract_features(session, cfg);
  session.visual_features = std::move(v);
  session.brain_features = std::move(b);
}

inline Sample make_sample(const Session& session, const FeatureConfig& cfg, int queries) {
  auto [v, b] = extract_features(session, cfg);
  Sample s;
  s.visual = std::move(v);
  s.brain = std::move(b);
  s.duration = session.timeline.duration();
  s.labels = assign_query_labels(session.labels, QuerySchedule{queries, s.duration});
  s.subject_id = static_cast<int>(session.subject_id);
  s.scene_id = static_cast<int>(session.scene_id);
  return s;
}

}  // namespace braintim
