#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "braintim/features.hpp"
#include "braintim/generator.hpp"
#include "braintim/signal.hpp"

using namespace braintim;

namespace {

RawSignal tone(double hz, double fs, std::size_t n, std::size_t channels = 1, double amp = 1.0) {
  RawSignal s{Rational::from_hz(fs), Matrix(channels, n)};
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      s.samples(c, i) = amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / fs + 0.3 * c);
    }
  }
  return s;
}

// Amplitude of the `hz` component by direct DFT over the middle half, which
// holds an integer number of periods in every case used here.
double dft_amplitude(std::span<const double> x, double hz, double fs) {
  const std::size_t a = x.size() / 4, b = a + x.size() / 2;
  double re = 0, im = 0;
  for (std::size_t i = a; i < b; ++i) {
    const double w = 2 * std::numbers::pi * hz * static_cast<double>(i) / fs;
    re += x[i] * std::cos(w);
    im += x[i] * std::sin(w);
  }
  return 2.0 * std::hypot(re, im) / static_cast<double>(b - a);
}

}  // namespace

TEST(Bandpass, DcIsRemoved) {
  RawSignal s{Rational::make(256, 1), Matrix(1, 2048)};
  s.samples.fill(3.0);
  const auto y = bandpass_filter(s);
  double mean = 0;
  for (double v : y.samples.data()) mean += v;
  mean /= static_cast<double>(y.samples.size());
  EXPECT_LT(std::abs(mean), 1e-3 * 3.0);
}

TEST(Bandpass, PassbandToneWithinOneDb) {
  const auto y = bandpass_filter(tone(10, 256, 2048));
  const double a = dft_amplitude(y.samples.row_span(0), 10, 256);
  EXPECT_GE(a, 0.89);
  EXPECT_LE(a, 1.12);
  // The oracle itself is calibrated on the unfiltered tone.
  EXPECT_NEAR(dft_amplitude(tone(10, 256, 2048).samples.row_span(0), 10, 256), 1.0, 1e-9);
}

TEST(Bandpass, StopbandToneAttenuated) {
  const auto y = bandpass_filter(tone(80, 256, 2048));
  EXPECT_LE(dft_amplitude(y.samples.row_span(0), 80, 256), 0.1);
}

TEST(Bandpass, TemplateAcrossTheBand) {
  for (double hz : {1.0, 2.0, 5.0, 20.0, 40.0}) {
    const auto y = bandpass_filter(tone(hz, 256, 4096));
    const double a = dft_amplitude(y.samples.row_span(0), hz, 256);
    EXPECT_GE(a, 0.89) << hz;
    EXPECT_LE(a, 1.12) << hz;
  }
  const auto y = bandpass_filter(tone(160.0 * 0.5, 256, 4096));
  EXPECT_LE(dft_amplitude(y.samples.row_span(0), 80, 256), 0.1);
}

TEST(Bandpass, ZeroPhase) {
  // A symmetric pulse stays symmetric about its centre.
  // The record is long enough for edge transients of the 0.5 Hz stage to
  // decay before they reach the centre.
  const int c = 8192;
  RawSignal s{Rational::make(256, 1), Matrix(1, 2 * c + 1)};
  for (int i = -20; i <= 20; ++i) s.samples(0, static_cast<std::size_t>(c + i)) = std::exp(-i * i / 40.0);
  const auto y = bandpass_filter(s);
  for (int i = 1; i < 200; ++i) {
    EXPECT_NEAR(y.samples(0, static_cast<std::size_t>(c + i)), y.samples(0, static_cast<std::size_t>(c - i)), 1e-9);
  }
}

TEST(Bandpass, LengthPreservedAndCutoffsChecked) {
  const auto s = tone(10, 128, 700, 3);
  const auto y = bandpass_filter(s);
  EXPECT_EQ(y.samples.rows(), 3u);
  EXPECT_EQ(y.samples.cols(), 700u);
  EXPECT_THROW(bandpass_filter(s, 0.5, 64), InvalidFilter);
  EXPECT_THROW(bandpass_filter(s, 0.0, 50), InvalidFilter);
  EXPECT_THROW(bandpass_filter(s, 30, 20), InvalidFilter);
}

TEST(Downsample, LengthArithmetic) {
  const auto y = downsample(tone(5, 256, 512), Rational::make(128, 1));
  EXPECT_EQ(y.samples.cols(), 256u);
  EXPECT_EQ(y.rate, Rational::make(128, 1));
  EXPECT_EQ(downsample(tone(5, 256, 513), Rational::make(128, 1)).samples.cols(), 256u);
}

TEST(Downsample, IdentityAtSourceRate) {
  const auto s = tone(5, 256, 300, 2);
  const auto y = downsample(s, Rational::make(256, 1));
  EXPECT_EQ(y.samples, s.samples);
  EXPECT_EQ(y.rate, s.rate);
}

TEST(Downsample, NonIntegerRatioRejected) {
  EXPECT_THROW(downsample(tone(5, 256, 512), Rational::make(100, 1)), UnsupportedRatio);
  EXPECT_THROW(downsample(tone(5, 256, 512), Rational::make(512, 1)), UnsupportedRatio);
}

TEST(Downsample, KeepsInBandAndSuppressesAliases) {
  const auto low = downsample(tone(10, 256, 4096), Rational::make(64, 1));
  EXPECT_NEAR(dft_amplitude(low.samples.row_span(0), 10, 64), 1.0, 0.12);
  // 60 Hz would alias onto 4 Hz at 64 Hz.
  const auto high = downsample(tone(60, 256, 4096), Rational::make(64, 1));
  EXPECT_LT(dft_amplitude(high.samples.row_span(0), 4, 64), 0.05);
}

namespace {

RawVideo random_video(std::size_t frames, std::size_t h, std::size_t w, std::uint64_t seed) {
  RawVideo v{Rational::make(4, 1), h, w, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  v.pixels.resize(frames * h * w * 3);
  for (auto& p : v.pixels) p = u(rng);
  return v;
}

}  // namespace

TEST(VideoEncoder, IdenticalFramesGiveIdenticalFeatures) {
  auto v = random_video(40, 4, 4, 1);
  const std::size_t fs = v.frame_size();
  // Copy frames 0..7 onto 20..27 so windows [0,2) and [5,7) see the same input.
  std::copy(v.pixels.begin(), v.pixels.begin() + 8 * fs, v.pixels.begin() + 20 * fs);
  const EncoderSpec enc{EncoderKind::SyntheticVideo, 32, 9};
  EXPECT_EQ(encode_video_window(v, 0, 2, 4, enc), encode_video_window(v, 5, 2, 4, enc));
}

TEST(VideoEncoder, SeedsGiveDifferentFeatures) {
  const auto v = random_video(40, 4, 4, 2);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = encode_video_window(v, 1, 2, 4, {EncoderKind::SyntheticVideo, 32, 2 * s});
    const auto b = encode_video_window(v, 1, 2, 4, {EncoderKind::SyntheticVideo, 32, 2 * s + 1});
    EXPECT_NE(a, b);
  }
}

TEST(VideoEncoder, OutputLengthAndBounds) {
  const auto v = random_video(40, 3, 5, 3);
  for (int d : {1, 7, 32, 100}) {
    const auto e = encode_video_window(v, 0.5, 3, 3, {EncoderKind::SyntheticVideo, d, 1});
    EXPECT_EQ(e.size(), static_cast<std::size_t>(d));
  }
  EXPECT_THROW(encode_video_window(v, 9, 2, 4, {EncoderKind::SyntheticVideo, 8, 1}), IndexError);
  EXPECT_THROW(encode_video_window(v, -1, 2, 4, {EncoderKind::SyntheticVideo, 8, 1}), IndexError);
  EXPECT_THROW(encode_video_window(v, 0, 2, 4, {EncoderKind::SyntheticSignal, 8, 1}), InvalidArgument);
}

TEST(VideoEncoder, PicksNearestFrames) {
  // At 4 Hz, window [0, 2) with K=4 samples frames at 0.25, 0.75, ... -> 1, 3, 5, 7.
  auto v = random_video(16, 2, 2, 4);
  const EncoderSpec enc{EncoderKind::SyntheticVideo, 16, 5};
  const auto base = encode_video_window(v, 0, 2, 4, enc);
  auto w = v;
  const std::size_t fs = v.frame_size();
  for (std::size_t f : {0u, 2u, 4u, 6u, 8u}) {
    for (std::size_t i = 0; i < fs; ++i) w.pixels[f * fs + i] = 0.123;
  }
  EXPECT_EQ(encode_video_window(w, 0, 2, 4, enc), base);
  w.pixels[3 * fs] += 0.25;
  EXPECT_NE(encode_video_window(w, 0, 2, 4, enc), base);
}

TEST(SignalEncoder, IdenticalChannelsPoolToSingleChannel) {
  auto one = tone(7, 64, 256, 1);
  RawSignal many{one.rate, Matrix(5, 256)};
  for (std::size_t c = 0; c < 5; ++c) {
    for (std::size_t i = 0; i < 256; ++i) many.samples(c, i) = one.samples(0, i);
  }
  const EncoderSpec enc{EncoderKind::SyntheticSignal, 16, 3};
  const auto a = encode_signal_window(one, 1, 2, enc);
  const auto b = encode_signal_window(many, 1, 2, enc);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(SignalEncoder, TwoChannelsPoolToTheMean) {
  RawSignal s{Rational::make(64, 1), Matrix(2, 256)};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  for (auto& v : s.samples.data()) v = n(rng);
  const EncoderSpec enc{EncoderKind::SyntheticSignal, 12, 3};
  SignalEncoder e(enc, s.rate, 2.0);
  const auto grid = e.encode_grid(s, 1.0);
  ASSERT_EQ(grid.size(), 2u);
  ASSERT_EQ(grid[0].rows(), 2u);  // two one-second cells
  const auto pooled = e.encode(s, 1.0);
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    double expect = 0;
    for (std::size_t g = 0; g < 2; ++g) expect += (grid[0](g, k) + grid[1](g, k)) / 2;
    EXPECT_NEAR(pooled[k], expect / 2, 1e-12);
  }
}

TEST(SignalEncoder, ZeroSignalGivesZeroVector) {
  RawSignal s{Rational::make(64, 1), Matrix(3, 256)};
  const auto e = encode_signal_window(s, 0, 2, {EncoderKind::SyntheticSignal, 16, 1});
  for (double v : e) EXPECT_EQ(v, 0.0);
}

TEST(SignalEncoder, ChannelPermutationInvariant) {
  RawSignal s{Rational::make(64, 1), Matrix(6, 320)};
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  for (auto& v : s.samples.data()) v = n(rng);
  RawSignal p{s.rate, Matrix(6, 320)};
  const std::size_t perm[6] = {3, 5, 0, 1, 4, 2};
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t i = 0; i < 320; ++i) p.samples(c, i) = s.samples(perm[c], i);
  }
  const EncoderSpec enc{EncoderKind::SyntheticSignal, 16, 8};
  const auto a = encode_signal_window(s, 0.5, 3, enc);
  const auto b = encode_signal_window(p, 0.5, 3, enc);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(SignalEncoder, WindowOutsideTimeline) {
  const auto s = tone(5, 64, 256);
  const EncoderSpec enc{EncoderKind::SyntheticSignal, 16, 1};
  EXPECT_THROW(encode_signal_window(s, 3.5, 1, enc), IndexError);
  EXPECT_THROW(encode_signal_window(s, 0, 2, {EncoderKind::SyntheticVideo, 16, 1}), InvalidArgument);
}

TEST(Encoders, FiniteOnRandomWindows) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0, 1);
  RawSignal s{Rational::make(64, 1), Matrix(4, 64 * 30)};
  for (auto& v : s.samples.data()) v = 100 * n(rng);
  const auto video = random_video(120, 4, 4, 5);
  const EncoderSpec eb{EncoderKind::SyntheticSignal, 16, 2};
  const EncoderSpec ev{EncoderKind::SyntheticVideo, 16, 2};
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double dt = 1 + std::floor(u(rng) * 4);
    const double t = std::floor(u(rng) * (29 - dt) * 4) / 4;
    for (double v : encode_signal_window(s, t, dt, eb)) ASSERT_TRUE(std::isfinite(v));
    for (double v : encode_video_window(video, t, dt, 4, ev)) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(ExtractFeatures, RowCountsFollowTheSchedule) {
  GeneratorSpec g;
  g.actions_per_session = 5;
  g.action_min_s = g.action_max_s = 2.0;  // T = 10
  const auto session = generate_session(g, 0, 0, 1);
  FeatureConfig fc;
  fc.window_s = 2;
  fc.step_s = 1;
  const auto [v, b] = extract_features(session, fc);
  EXPECT_EQ(v.vectors.rows(), 9u);
  EXPECT_EQ(b.vectors.rows(), 9u);
  EXPECT_EQ(v.vectors.cols(), 32u);
  EXPECT_EQ(b.vectors.cols(), 16u);
  fc.window_s = 10;
  const auto [v1, b1] = extract_features(session, fc);
  EXPECT_EQ(v1.vectors.rows(), 1u);
  EXPECT_EQ(b1.vectors.rows(), 1u);
}

TEST(ExtractFeatures, RowsMatchPerWindowEncoding) {
  GeneratorSpec g;
  g.actions_per_session = 4;
  g.action_min_s = g.action_max_s = 3.0;
  const auto session = generate_session(g, 1, 1, 2);
  FeatureConfig fc;
  fc.window_s = 3;
  fc.step_s = 1.5;
  const auto [v, b] = extract_features(session, fc);
  const auto clean = preprocess_signal(*session.signal, fc.preprocessing);
  for (std::int64_t i = 1; i <= v.schedule.count; ++i) {
    const auto [t0, t1] = window_interval(v.schedule, i);
    const auto ev = encode_video_window(*session.video, t0, t1 - t0, fc.frames_per_window, fc.visual);
    const auto eb = encode_signal_window(clean, t0, t1 - t0, fc.brain);
    for (std::size_t k = 0; k < ev.size(); ++k) EXPECT_EQ(v.vectors(i - 1, k), static_cast<float>(ev[k]));
    for (std::size_t k = 0; k < eb.size(); ++k) EXPECT_EQ(b.vectors(i - 1, k), static_cast<float>(eb[k]));
  }
}

TEST(ExtractFeatures, CachedFeaturesAreReused) {
  GeneratorSpec g;
  g.actions_per_session = 4;
  const auto session = generate_session(g, 2, 0, 3);
  FeatureConfig fc;
  Session cached = session;
  cache_features(cached, fc);
  cached.video.reset();
  cached.signal.reset();
  const auto [v, b] = extract_features(cached, fc);
  const auto [v2, b2] = extract_features(session, fc);
  EXPECT_EQ(v, v2);
  EXPECT_EQ(b, b2);
  FeatureConfig other = fc;
  other.step_s = 1;
  EXPECT_THROW(extract_features(cached, other), DataError);
}
