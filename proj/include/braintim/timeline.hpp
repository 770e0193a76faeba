#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "braintim/actions.hpp"
#include "braintim/error.hpp"

namespace braintim {

using Millis = std::int64_t;

// Rates are stored as reduced rationals so that stream lengths and decimation
// ratios are computed exactly.
struct Rational {
  std::uint32_t num = 1;
  std::uint32_t den = 1;

  static Rational make(std::uint64_t num, std::uint64_t den) {
    if (num == 0 || den == 0) throw InvalidArgument("rate must be a positive rational");
    const auto g = std::gcd(num, den);
    num /= g;
    den /= g;
    if (num > UINT32_MAX || den > UINT32_MAX) throw InvalidArgument("rate does not fit in u32/u32");
    return {static_cast<std::uint32_t>(num), static_cast<std::uint32_t>(den)};
  }
  // Accepts rates with up to millihertz resolution.
  static Rational from_hz(double hz) {
    if (!(hz > 0.0) || !std::isfinite(hz)) throw InvalidArgument("rate must be > 0");
    const double scaled = hz * 1000.0;
    const auto rounded = static_cast<std::uint64_t>(std::llround(scaled));
    if (std::abs(scaled - static_cast<double>(rounded)) > 1e-6 || rounded == 0) {
      throw InvalidArgument("rate must have millihertz resolution");
    }
    return make(rounded, 1000);
  }

  double hz() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

inline Millis to_millis(double seconds) {
  if (!std::isfinite(seconds)) throw InvalidSchedule("time must be finite");
  const double scaled = seconds * 1000.0;
  const auto rounded = std::llround(scaled);
  if (std::abs(scaled - static_cast<double>(rounded)) > 1e-6) {
    throw InvalidSchedule("time must have millisecond resolution: " + std::to_string(seconds));
  }
  return rounded;
}

inline double to_seconds(Millis ms) { return static_cast<double>(ms) / 1000.0; }

// ceil(duration * rate) evaluated exactly.
inline std::int64_t stream_length(Millis duration, Rational rate) {
  const std::uint64_t numer = static_cast<std::uint64_t>(duration) * rate.num;
  const std::uint64_t denom = 1000ULL * rate.den;
  return static_cast<std::int64_t>((numer + denom - 1) / denom);
}

struct TimelineSpec {
  Millis duration_ms = 0;
  Rational video_rate;
  Rational signal_rate;

  double duration() const { return to_seconds(duration_ms); }
  std::int64_t video_frames() const { return stream_length(duration_ms, video_rate); }
  std::int64_t signal_samples() const { return stream_length(duration_ms, signal_rate); }

  void validate() const {
    if (duration_ms <= 0) throw InvalidSchedule("timeline duration must be > 0");
    if (video_rate.num == 0 || video_rate.den == 0 || signal_rate.num == 0 || signal_rate.den == 0) {
      throw InvalidSchedule("timeline rates must be > 0");
    }
  }
  friend bool operator==(const TimelineSpec&, const TimelineSpec&) = default;
};

struct WindowSchedule {
  Millis window_ms = 0;
  Millis step_ms = 0;
  std::int64_t count = 0;

  double window() const { return to_seconds(window_ms); }
  double step() const { return to_seconds(step_ms); }
  friend bool operator==(const WindowSchedule&, const WindowSchedule&) = default;
};

inline std::int64_t window_count_ms(Millis duration, Millis window, Millis step) {
  if (duration <= 0 || window <= 0 || step <= 0) {
    throw InvalidSchedule("window schedule values must be positive");
  }
  if (window > duration) throw InvalidSchedule("window longer than timeline");
  return (duration - window) / step + 1;
}

// N = floor((T - dt) / step) + 1 on millisecond-exact values.
inline std::int64_t window_count(double duration, double window, double step) {
  if (!(duration > 0.0) || !(window > 0.0) || !(step > 0.0)) {
    throw InvalidSchedule("window schedule values must be positive");
  }
  return window_count_ms(to_millis(duration), to_millis(window), to_millis(step));
}

inline WindowSchedule make_window_schedule(Millis duration, Millis window, Millis step) {
  return {window, step, window_count_ms(duration, window, step)};
}

inline WindowSchedule make_window_schedule(double duration, double window, double step) {
  if (!(duration > 0.0) || !(window > 0.0) || !(step > 0.0)) {
    throw InvalidSchedule("window schedule values must be positive");
  }
  return make_window_schedule(to_millis(duration), to_millis(window), to_millis(step));
}

// 1-based window index; returns [t_i, t_i + dt).
inline std::pair<double, double> window_interval(const WindowSchedule& s, std::int64_t i) {
  if (i < 1 || i > s.count) throw IndexError("window index out of range");
  const Millis start = (i - 1) * s.step_ms;
  return {to_seconds(start), to_seconds(start + s.window_ms)};
}

struct QuerySchedule {
  int count = 1;
  double duration = 0.0;

  void validate() const {
    if (count < 1) throw InvalidSchedule("query count must be >= 1");
    if (!(duration > 0.0)) throw InvalidSchedule("query duration must be > 0");
  }
};

// 1-based query index; returns [(j-1)T/Q, jT/Q].
inline std::pair<double, double> query_interval(const QuerySchedule& s, int j) {
  if (j < 1 || j > s.count) throw IndexError("query index out of range");
  const double q = static_cast<double>(s.count);
  const double start = j == 1 ? 0.0 : static_cast<double>(j - 1) * s.duration / q;
  const double end = j == s.count ? s.duration : static_cast<double>(j) * s.duration / q;
  return {start, end};
}

// Centered sample times tau_k = t_i + (2k - 1) / (2K) * dt, k = 1..K.
inline std::vector<double> frame_timestamps(double start, double window, int frames) {
  if (frames < 1) throw InvalidArgument("frame count must be >= 1");
  if (!(window > 0.0)) throw InvalidArgument("window must be > 0");
  std::vector<double> out(static_cast<std::size_t>(frames));
  const double denom = 2.0 * frames;
  for (int k = 1; k <= frames; ++k) {
    out[static_cast<std::size_t>(k - 1)] = start + (2.0 * k - 1.0) / denom * window;
  }
  return out;
}

struct LabelInterval {
  Millis start_ms = 0;
  Millis end_ms = 0;
  int verb = 0;
  int action = 0;
  friend bool operator==(const LabelInterval&, const LabelInterval&) = default;
};

using LabelTrack = std::vector<LabelInterval>;

inline void validate_label_track(const LabelTrack& track, Millis duration) {
  Millis prev_end = 0;
  for (const auto& l : track) {
    if (l.start_ms < prev_end) throw InvalidArgument("label intervals overlap or are unsorted");
    if (l.end_ms <= l.start_ms) throw InvalidArgument("label interval is empty");
    if (l.end_ms > duration) throw InvalidArgument("label interval exceeds timeline");
    if (l.action < 0 || l.action >= kActionCount) throw InvalidLabel("action id out of range");
    if (l.verb != verb_of(l.action)) throw InvalidLabel("verb id inconsistent with action id");
    prev_end = l.end_ms;
  }
}

inline constexpr int kBackground = -1;

struct QueryLabel {
  int verb = kBackground;
  int action = kBackground;
  bool background() const { return action == kBackground; }
  friend bool operator==(const QueryLabel&, const QueryLabel&) = default;
};

// Each query takes the label with the largest total overlap with its interval,
// summed over every labeled interval carrying that label. Ties go to the label
// whose first overlapping interval starts earliest; zero overlap is background.
inline std::vector<QueryLabel> assign_query_labels(const LabelTrack& track,
                                                   const QuerySchedule& schedule) {
  schedule.validate();
  std::vector<QueryLabel> out;
  out.reserve(static_cast<std::size_t>(schedule.count));
  for (int j = 1; j <= schedule.count; ++j) {
    const auto [qs, qe] = query_interval(schedule, j);
    struct Acc {
      double overlap = 0.0;
      double first_start = 0.0;
    };
    std::map<std::pair<int, int>, Acc> acc;
    for (const auto& l : track) {
      const double s = std::max(qs, to_seconds(l.start_ms));
      const double e = std::min(qe, to_seconds(l.end_ms));
      if (e <= s) continue;
      auto key = std::make_pair(l.verb, l.action);
      auto it = acc.find(key);
      if (it == acc.end()) {
        acc.emplace(key, Acc{e - s, to_seconds(l.start_ms)});
      } else {
        it->second.overlap += e - s;
      }
    }
    QueryLabel best;
    double best_overlap = 0.0;
    double best_start = 0.0;
    for (const auto& [key, a] : acc) {
      const bool better = a.overlap > best_overlap ||
                          (a.overlap == best_overlap && !best.background() && a.first_start < best_start);
      if (best.background() || better) {
        if (best.background() && !(a.overlap > 0.0)) continue;
        best = {key.first, key.second};
        best_overlap = a.overlap;
        best_start = a.first_start;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace braintim
