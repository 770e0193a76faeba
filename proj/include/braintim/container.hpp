#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "braintim/error.hpp"
#include "braintim/session.hpp"

// Session container, little-endian throughout:
//
//   "EGBR" | u16 version | u32 subject | u32 scene | u64 duration_ms
//   | u32 fv_num | u32 fv_den | u32 fb_num | u32 fb_den | u16 C | u16 H | u16 W
//   | u32 label_count | label_count x (u64 start_ms, u64 end_ms, u8 verb, u8 action)
//   | blocks until end of file: char[4] tag | u64 byte_length | payload
//
// RAWV payload: ceil(T*fv) * H * W * 3 f32, frame-major.
// RAWB payload: C * ceil(T*fb) f32, channel-major.
// FETV/FETB payload: u32 rows | u32 cols | u64 window_ms | u64 step_ms | rows*cols f32.

namespace braintim {

inline constexpr std::array<char, 4> kSessionMagic = {'E', 'G', 'B', 'R'};
inline constexpr std::uint16_t kSessionVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void put_f32(double v) { put(static_cast<float>(v)); }
  std::vector<char>& bytes() { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <class T>
  T get(const char* what) {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n, const char* what) const {
    if (size_ - pos_ < n) throw TruncatedStream(std::string("stream ends inside ") + what);
  }
  const char* take(std::size_t n, const char* what) {
    need(n, what);
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline void put_block(ByteWriter& w, std::string_view tag, ByteWriter& payload) {
  w.put_bytes(tag);
  w.put<std::uint64_t>(payload.size());
  auto& dst = w.bytes();
  dst.insert(dst.end(), payload.bytes().begin(), payload.bytes().end());
}

inline void put_features(ByteWriter& w, std::string_view tag, const FeatureSequence& f) {
  ByteWriter p;
  p.put<std::uint32_t>(static_cast<std::uint32_t>(f.vectors.rows()));
  p.put<std::uint32_t>(static_cast<std::uint32_t>(f.vectors.cols()));
  p.put<std::uint64_t>(static_cast<std::uint64_t>(f.schedule.window_ms));
  p.put<std::uint64_t>(static_cast<std::uint64_t>(f.schedule.step_ms));
  for (double v : f.vectors.data()) p.put_f32(v);
  put_block(w, tag, p);
}

inline std::vector<double> read_f32(ByteReader& r, std::size_t count, const char* what) {
  const char* p = r.take(count * sizeof(float), what);
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, p + i * sizeof(float), sizeof(float));
    out[i] = f;
  }
  return out;
}

inline FeatureSequence read_features(ByteReader& r, std::uint64_t length, Modality m, Millis duration) {
  if (length < 24) throw TruncatedStream("feature block shorter than its header");
  const auto rows = r.get<std::uint32_t>("feature header");
  const auto cols = r.get<std::uint32_t>("feature header");
  const auto window = static_cast<Millis>(r.get<std::uint64_t>("feature header"));
  const auto step = static_cast<Millis>(r.get<std::uint64_t>("feature header"));
  const std::uint64_t expected = 24 + static_cast<std::uint64_t>(rows) * cols * sizeof(float);
  if (length != expected) throw TruncatedStream("feature block length does not match its declared shape");
  FeatureSequence f;
  f.modality = m;
  try {
    f.schedule = make_window_schedule(duration, window, step);
  } catch (const InvalidSchedule& e) {
    throw ParseError(std::string("feature block schedule invalid: ") + e.what());
  }
  if (f.schedule.count != rows) throw ParseError("feature block row count disagrees with its schedule");
  f.vectors = Matrix(rows, cols, read_f32(r, static_cast<std::size_t>(rows) * cols, "feature payload"));
  return f;
}

}  // namespace detail

inline std::vector<char> encode_session(const Session& s) {
  s.validate();
  detail::ByteWriter w;
  w.put_bytes({kSessionMagic.data(), kSessionMagic.size()});
  w.put<std::uint16_t>(kSessionVersion);
  w.put<std::uint32_t>(s.subject_id);
  w.put<std::uint32_t>(s.scene_id);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(s.timeline.duration_ms));
  w.put<std::uint32_t>(s.timeline.video_rate.num);
  w.put<std::uint32_t>(s.timeline.video_rate.den);
  w.put<std::uint32_t>(s.timeline.signal_rate.num);
  w.put<std::uint32_t>(s.timeline.signal_rate.den);
  w.put<std::uint16_t>(s.channels);
  w.put<std::uint16_t>(s.height);
  w.put<std::uint16_t>(s.width);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.labels.size()));
  for (const auto& l : s.labels) {
    w.put<std::uint64_t>(static_cast<std::uint64_t>(l.start_ms));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(l.end_ms));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.verb));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.action));
  }
  if (s.video) {
    detail::ByteWriter p;
    for (double v : s.video->pixels) p.put_f32(v);
    detail::put_block(w, "RAWV", p);
  }
  if (s.signal) {
    detail::ByteWriter p;
    for (double v : s.signal->samples.data()) p.put_f32(v);
    detail::put_block(w, "RAWB", p);
  }
  if (s.visual_features) detail::put_features(w, "FETV", *s.visual_features);
  if (s.brain_features) detail::put_features(w, "FETB", *s.brain_features);
  return std::move(w.bytes());
}

inline Session decode_session(const std::vector<char>& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size());
  if (bytes.size() < kSessionMagic.size() ||
      std::memcmp(bytes.data(), kSessionMagic.data(), kSessionMagic.size()) != 0) {
    throw BadMagic("not a session container (bad magic)");
  }
  r.take(kSessionMagic.size(), "magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kSessionVersion) {
    throw UnsupportedVersion("unsupported session container version " + std::to_string(version));
  }
  Session s;
  s.subject_id = r.get<std::uint32_t>("header");
  s.scene_id = r.get<std::uint32_t>("header");
  s.timeline.duration_ms = static_cast<Millis>(r.get<std::uint64_t>("header"));
  s.timeline.video_rate.num = r.get<std::uint32_t>("header");
  s.timeline.video_rate.den = r.get<std::uint32_t>("header");
  s.timeline.signal_rate.num = r.get<std::uint32_t>("header");
  s.timeline.signal_rate.den = r.get<std::uint32_t>("header");
  s.channels = r.get<std::uint16_t>("header");
  s.height = r.get<std::uint16_t>("header");
  s.width = r.get<std::uint16_t>("header");
  try {
    s.timeline.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("invalid timeline in header: ") + e.what());
  }
  const auto label_count = r.get<std::uint32_t>("label count");
  r.need(static_cast<std::size_t>(label_count) * 18, "label records");
  for (std::uint32_t i = 0; i < label_count; ++i) {
    LabelInterval l;
    l.start_ms = static_cast<Millis>(r.get<std::uint64_t>("label"));
    l.end_ms = static_cast<Millis>(r.get<std::uint64_t>("label"));
    l.verb = r.get<std::uint8_t>("label");
    l.action = r.get<std::uint8_t>("label");
    s.labels.push_back(l);
  }
  while (!r.done()) {
    const char* tag_ptr = r.take(4, "block tag");
    const std::string tag(tag_ptr, 4);
    const auto length = r.get<std::uint64_t>("block length");
    if (tag == "RAWV") {
      const std::uint64_t frame_size = static_cast<std::uint64_t>(s.height) * s.width * 3;
      const std::uint64_t expected = static_cast<std::uint64_t>(s.timeline.video_frames()) * frame_size * sizeof(float);
      if (length != expected) throw TruncatedStream("RAWV length does not match ceil(T*fv)*H*W*3 samples");
      RawVideo v{s.timeline.video_rate, s.height, s.width, detail::read_f32(r, length / sizeof(float), "RAWV payload")};
      s.video = std::move(v);
    } else if (tag == "RAWB") {
      const std::uint64_t samples = static_cast<std::uint64_t>(s.timeline.signal_samples());
      const std::uint64_t expected = samples * s.channels * sizeof(float);
      if (length != expected) throw TruncatedStream("RAWB length does not match C*ceil(T*fb) samples");
      s.signal = RawSignal{s.timeline.signal_rate,
                           Matrix(s.channels, samples, detail::read_f32(r, length / sizeof(float), "RAWB payload"))};
    } else if (tag == "FETV") {
      r.need(length, "FETV payload");
      s.visual_features = detail::read_features(r, length, Modality::Visual, s.timeline.duration_ms);
    } else if (tag == "FETB") {
      r.need(length, "FETB payload");
      s.brain_features = detail::read_features(r, length, Modality::Brain, s.timeline.duration_ms);
    } else {
      throw ParseError("unknown block tag '" + tag + "'");
    }
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("inconsistent session: ") + e.what());
  }
  return s;
}

inline void write_session(const std::filesystem::path& path, const Session& s) {
  const auto bytes = encode_session(s);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

inline Session read_session(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_session(bytes);
}

}  // namespace braintim
