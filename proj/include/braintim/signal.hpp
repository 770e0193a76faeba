#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "braintim/error.hpp"
#include "braintim/rng.hpp"
#include "braintim/tensor.hpp"
#include "braintim/timeline.hpp"

namespace braintim {

// C x L multichannel recording, one row per channel.
struct RawSignal {
  Rational rate;
  Matrix samples;

  std::size_t channels() const { return samples.rows(); }
  std::size_t length() const { return samples.cols(); }
  friend bool operator==(const RawSignal&, const RawSignal&) = default;
};

// Frames of H x W x 3 intensities, flattened in (row, col, rgb) order.
struct RawVideo {
  Rational rate;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  std::size_t frame_size() const { return height * width * 3; }
  std::size_t frames() const { return frame_size() == 0 ? 0 : pixels.size() / frame_size(); }
  std::span<const double> frame(std::size_t n) const {
    return {pixels.data() + n * frame_size(), frame_size()};
  }
  friend bool operator==(const RawVideo&, const RawVideo&) = default;
};

// ---------------------------------------------------------------------------
// IIR filtering

struct Biquad {
  double b0, b1, b2, a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

using SosFilter = std::vector<Biquad>;

namespace detail {

// Quality factors of the conjugate pole pairs of an even-order Butterworth
// prototype.
inline std::vector<double> butterworth_q(int order) {
  std::vector<double> q;
  for (int k = 0; k < order / 2; ++k) {
    q.push_back(1.0 / (2.0 * std::sin(std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order))));
  }
  return q;
}

inline Biquad bilinear_section(double cutoff_hz, double rate_hz, double q, bool highpass) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
  const double norm = 1.0 / (1.0 + k / q + k * k);
  Biquad s{};
  if (highpass) {
    s.b0 = norm;
    s.b1 = -2.0 * norm;
  } else {
    s.b0 = k * k * norm;
    s.b1 = 2.0 * s.b0;
  }
  s.b2 = s.b0;
  s.a1 = 2.0 * (k * k - 1.0) * norm;
  s.a2 = (1.0 - k / q + k * k) * norm;
  return s;
}

// Transposed direct form II over one section, starting from the steady state
// of a constant input equal to `level`.
inline void run_section(const Biquad& s, std::vector<double>& x) {
  if (x.empty()) return;
  const double level = x.front();
  const double y_ss = s.dc_gain() * level;
  double z1 = y_ss - s.b0 * level;
  double z2 = s.b2 * level - s.a2 * y_ss;
  for (double& v : x) {
    const double in = v;
    const double y = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * y + z2;
    z2 = s.b2 * in - s.a2 * y;
    v = y;
  }
}

}  // namespace detail

inline SosFilter butterworth_lowpass(int order, double cutoff_hz, double rate_hz) {
  if (order < 2 || order % 2 != 0) throw InvalidFilter("filter order must be even and >= 2");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < rate_hz / 2.0)) {
    throw InvalidFilter("cutoff must lie strictly between 0 and Nyquist");
  }
  SosFilter f;
  for (double q : detail::butterworth_q(order)) {
    f.push_back(detail::bilinear_section(cutoff_hz, rate_hz, q, false));
  }
  return f;
}

inline SosFilter butterworth_highpass(int order, double cutoff_hz, double rate_hz) {
  if (order < 2 || order % 2 != 0) throw InvalidFilter("filter order must be even and >= 2");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < rate_hz / 2.0)) {
    throw InvalidFilter("cutoff must lie strictly between 0 and Nyquist");
  }
  SosFilter f;
  for (double q : detail::butterworth_q(order)) {
    f.push_back(detail::bilinear_section(cutoff_hz, rate_hz, q, true));
  }
  return f;
}

// Order-4 Butterworth high-pass at `low` cascaded with an order-4 low-pass at
// `high`.
inline SosFilter butterworth_bandpass(double low_hz, double high_hz, double rate_hz) {
  if (!(low_hz > 0.0) || !(low_hz < high_hz)) throw InvalidFilter("band edges must satisfy 0 < low < high");
  if (!(high_hz < rate_hz / 2.0)) throw InvalidFilter("high cutoff must be below Nyquist");
  SosFilter f = butterworth_highpass(4, low_hz, rate_hz);
  for (const auto& s : butterworth_lowpass(4, high_hz, rate_hz)) f.push_back(s);
  return f;
}

// Zero-phase forward-backward filtering with odd-reflection padding of
// `pad` samples on each side (clamped to the signal length).
inline std::vector<double> filtfilt(const SosFilter& filter, std::span<const double> x,
                                    std::size_t pad) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  pad = std::min(pad, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  for (const auto& s : filter) detail::run_section(s, ext);
  std::reverse(ext.begin(), ext.end());
  for (const auto& s : filter) detail::run_section(s, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

namespace detail {

inline RawSignal filter_channels(const RawSignal& signal, const SosFilter& filter, std::size_t pad) {
  RawSignal out{signal.rate, Matrix(signal.channels(), signal.length())};
  for (std::size_t c = 0; c < signal.channels(); ++c) {
    const auto y = filtfilt(filter, signal.samples.row_span(c), pad);
    std::copy(y.begin(), y.end(), out.samples.row_span(c).begin());
  }
  return out;
}

}  // namespace detail

// Zero-phase band-pass; the default band matches common EEG practice.
inline RawSignal bandpass_filter(const RawSignal& signal, double low_hz = 0.5, double high_hz = 50.0) {
  const double fs = signal.rate.hz();
  if (!(low_hz > 0.0) || !(low_hz < high_hz)) throw InvalidFilter("band edges must satisfy 0 < low < high");
  if (!(high_hz < fs / 2.0)) {
    throw InvalidFilter("high cutoff " + std::to_string(high_hz) + " Hz is not below Nyquist");
  }
  const auto filter = butterworth_bandpass(low_hz, high_hz, fs);
  // Three time constants of the high-pass edge.
  const auto pad = static_cast<std::size_t>(std::ceil(3.0 * fs / low_hz));
  return detail::filter_channels(signal, filter, pad);
}

// Integer decimation factor source/target, or UnsupportedRatio.
inline std::uint64_t decimation_factor(Rational source, Rational target) {
  const std::uint64_t num = static_cast<std::uint64_t>(source.num) * target.den;
  const std::uint64_t den = static_cast<std::uint64_t>(source.den) * target.num;
  if (num < den) throw UnsupportedRatio("target rate exceeds source rate");
  if (num % den != 0) {
    throw UnsupportedRatio("source/target rate ratio " + std::to_string(source.hz()) + "/" +
                           std::to_string(target.hz()) + " is not an integer");
  }
  return num / den;
}

// Anti-aliased integer decimation. Output length is floor(L * target / source).
inline RawSignal downsample(const RawSignal& signal, Rational target) {
  const auto factor = decimation_factor(signal.rate, target);
  if (factor == 1) return signal;
  const double fs = signal.rate.hz();
  const auto aa = butterworth_lowpass(8, 0.8 * target.hz() / 2.0, fs);
  const auto filtered = detail::filter_channels(signal, aa, 64 * factor);
  const std::size_t out_len = signal.length() / factor;
  RawSignal out{target, Matrix(signal.channels(), out_len)};
  for (std::size_t c = 0; c < signal.channels(); ++c) {
    for (std::size_t i = 0; i < out_len; ++i) out.samples(c, i) = filtered.samples(c, i * factor);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stand-in window encoders

enum class EncoderKind { SyntheticVideo, SyntheticSignal, Precomputed };

inline std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::SyntheticVideo: return "synthetic-video";
    case EncoderKind::SyntheticSignal: return "synthetic-signal";
    case EncoderKind::Precomputed: return "precomputed";
  }
  return "unknown";
}

struct EncoderSpec {
  EncoderKind kind = EncoderKind::SyntheticVideo;
  int out_dim = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (out_dim < 1) throw InvalidArgument("encoder out_dim must be >= 1");
  }
};

namespace detail {

// Gaussian random projection out_dim x in_dim with unit-gain rows.
inline Matrix random_projection(const EncoderSpec& spec, std::size_t in_dim, double gain) {
  Rng rng(mix_seed({spec.seed, static_cast<std::uint64_t>(spec.kind), in_dim,
                    static_cast<std::uint64_t>(spec.out_dim)}));
  Matrix p(static_cast<std::size_t>(spec.out_dim), in_dim);
  const double scale = gain / std::sqrt(static_cast<double>(in_dim));
  for (auto& v : p.data()) v = rng.normal() * scale;
  return p;
}

inline void project_tanh(const Matrix& p, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double acc = 0.0;
    const auto row = p.row_span(r);
    for (std::size_t i = 0; i < x.size(); ++i) acc += row[i] * x[i];
    out[r] = std::tanh(acc);
  }
}

inline void check_window(double start, double window, double available) {
  if (!(window > 0.0)) throw IndexError("window length must be > 0");
  if (start < -1e-9 || start + window > available + 1e-9) {
    throw IndexError("window [" + std::to_string(start) + ", " + std::to_string(start + window) +
                     ") lies outside the stream");
  }
}

}  // namespace detail

// tanh of a fixed random projection of the K centered frames nearest the
// window's sample times.
class VideoEncoder {
 public:
  VideoEncoder(const EncoderSpec& spec, std::size_t frame_size, int frames_per_window)
      : spec_(spec), frames_per_window_(frames_per_window) {
    spec.validate();
    if (spec.kind != EncoderKind::SyntheticVideo) {
      throw InvalidArgument("video encoder requires kind synthetic-video, got " + to_string(spec.kind));
    }
    if (frames_per_window < 1) throw InvalidArgument("frame count must be >= 1");
    projection_ = detail::random_projection(spec, frame_size * static_cast<std::size_t>(frames_per_window), 3.0);
  }

  std::vector<double> encode(const RawVideo& video, double start, double window) const {
    if (video.frames() == 0) throw IndexError("video has no frames");
    const double fs = video.rate.hz();
    detail::check_window(start, window, static_cast<double>(video.frames()) / fs);
    const std::size_t fsize = video.frame_size();
    if (fsize * static_cast<std::size_t>(frames_per_window_) != projection_.cols()) {
      throw ShapeError("video frame size does not match encoder");
    }
    std::vector<double> x;
    x.reserve(projection_.cols());
    const auto last = static_cast<std::int64_t>(video.frames()) - 1;
    for (double tau : frame_timestamps(start, window, frames_per_window_)) {
      const auto idx = std::clamp<std::int64_t>(std::llround(tau * fs), 0, last);
      for (double px : video.frame(static_cast<std::size_t>(idx))) x.push_back(px - 0.5);
    }
    std::vector<double> out(static_cast<std::size_t>(spec_.out_dim));
    detail::project_tanh(projection_, x, out);
    return out;
  }

  int out_dim() const { return spec_.out_dim; }

 private:
  EncoderSpec spec_;
  int frames_per_window_;
  Matrix projection_;
};

// Per channel and per one-second cell: log1p periodogram, fixed random
// projection, tanh. Cell features are averaged over channels, then over cells.
class SignalEncoder {
 public:
  SignalEncoder(const EncoderSpec& spec, Rational rate, double window) : spec_(spec), rate_(rate) {
    spec.validate();
    if (spec.kind != EncoderKind::SyntheticSignal) {
      throw InvalidArgument("signal encoder requires kind synthetic-signal, got " + to_string(spec.kind));
    }
    window_samples_ = static_cast<std::size_t>(std::llround(window * rate.hz()));
    cells_ = static_cast<std::size_t>(std::max<long long>(1, std::llround(window)));
    cell_len_ = window_samples_ / cells_;
    if (cell_len_ < 2) throw InvalidArgument("window too short for the signal encoder grid");
    bins_ = cell_len_ / 2 + 1;
    cos_.resize(bins_ * cell_len_);
    sin_.resize(bins_ * cell_len_);
    for (std::size_t k = 0; k < bins_; ++k) {
      for (std::size_t n = 0; n < cell_len_; ++n) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k * n % cell_len_) /
                         static_cast<double>(cell_len_);
        cos_[k * cell_len_ + n] = std::cos(w);
        sin_[k * cell_len_ + n] = std::sin(w);
      }
    }
    projection_ = detail::random_projection(spec, bins_, 1.0);
  }

  std::size_t cells() const { return cells_; }
  std::size_t cell_length() const { return cell_len_; }

  // Channels x cells x out_dim feature grid for one window, before pooling.
  std::vector<Matrix> encode_grid(const RawSignal& signal, double start) const {
    if (!(signal.rate == rate_)) throw ShapeError("signal rate does not match encoder");
    const double fs = rate_.hz();
    detail::check_window(start, static_cast<double>(window_samples_) / fs,
                         static_cast<double>(signal.length()) / fs);
    const auto first = static_cast<std::size_t>(std::llround(start * fs));
    if (first + window_samples_ > signal.length()) throw IndexError("window exceeds signal length");
    std::vector<Matrix> grid;
    std::vector<double> spectrum(bins_);
    const auto d = static_cast<std::size_t>(spec_.out_dim);
    for (std::size_t c = 0; c < signal.channels(); ++c) {
      Matrix m(cells_, d);
      const auto row = signal.samples.row_span(c);
      for (std::size_t g = 0; g < cells_; ++g) {
        const double* x = row.data() + first + g * cell_len_;
        for (std::size_t k = 0; k < bins_; ++k) {
          double re = 0.0, im = 0.0;
          const double* ck = &cos_[k * cell_len_];
          const double* sk = &sin_[k * cell_len_];
          for (std::size_t n = 0; n < cell_len_; ++n) {
            re += x[n] * ck[n];
            im -= x[n] * sk[n];
          }
          spectrum[k] = std::log1p((re * re + im * im) / static_cast<double>(cell_len_));
        }
        detail::project_tanh(projection_, spectrum, m.row_span(g));
      }
      grid.push_back(std::move(m));
    }
    return grid;
  }

  std::vector<double> encode(const RawSignal& signal, double start) const {
    const auto grid = encode_grid(signal, start);
    const auto d = static_cast<std::size_t>(spec_.out_dim);
    std::vector<double> out(d, 0.0);
    Matrix channel_mean(cells_, d);
    for (const auto& m : grid) {
      for (std::size_t i = 0; i < m.size(); ++i) channel_mean[i] += m[i];
    }
    const double inv_c = 1.0 / static_cast<double>(grid.size());
    for (std::size_t g = 0; g < cells_; ++g) {
      for (std::size_t k = 0; k < d; ++k) out[k] += channel_mean(g, k) * inv_c;
    }
    for (auto& v : out) v /= static_cast<double>(cells_);
    return out;
  }

 private:
  EncoderSpec spec_;
  Rational rate_;
  std::size_t window_samples_ = 0;
  std::size_t cells_ = 1;
  std::size_t cell_len_ = 0;
  std::size_t bins_ = 0;
  std::vector<double> cos_, sin_;
  Matrix projection_;
};

inline std::vector<double> encode_video_window(const RawVideo& video, double start, double window,
                                               int frames, const EncoderSpec& enc) {
  return VideoEncoder(enc, video.frame_size(), frames).encode(video, start, window);
}

inline std::vector<double> encode_signal_window(const RawSignal& signal, double start, double window,
                                                const EncoderSpec& enc) {
  return SignalEncoder(enc, signal.rate, window).encode(signal, start);
}

enum class Modality { Visual, Brain, Both };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::Visual: return "visual";
    case Modality::Brain: return "brain";
    case Modality::Both: return "both";
  }
  return "unknown";
}

// N x d window features aligned with a window schedule.
struct FeatureSequence {
  Modality modality = Modality::Visual;
  Matrix vectors;
  WindowSchedule schedule;

  friend bool operator==(const FeatureSequence&, const FeatureSequence&) = default;
};

}  // namespace braintim
