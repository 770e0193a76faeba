#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "braintim/config.hpp"
#include "braintim/container.hpp"
#include "braintim/error.hpp"
#include "braintim/model.hpp"

namespace braintim {

// Checkpoint layout (little-endian):
//   magic "BTCK", version u16, config length u32, config text (key = value
//   lines), tensor count u32, then per tensor: name length u16, name bytes,
//   rows u32, cols u32, rows * cols f64 values.
inline constexpr std::array<char, 4> kCheckpointMagic = {'B', 'T', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline std::vector<char> encode_checkpoint(const ModelConfig& cfg, const ModelParams& params) {
  check_params(cfg, params);
  detail::ByteWriter w;
  w.put_bytes({kCheckpointMagic.data(), kCheckpointMagic.size()});
  w.put<std::uint16_t>(kCheckpointVersion);
  KeyValues kv;
  to_kv(kv, cfg, true);
  const auto text = format_key_values(kv);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, m] : params.tensors) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) w.put<double>(v);
  }
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size());
  const char* magic = r.take(4, "magic");
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), magic)) throw BadMagic("not a checkpoint file");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw UnsupportedVersion("checkpoint version " + std::to_string(version) + " is not supported");
  }
  const auto text_len = r.get<std::uint32_t>("config length");
  const char* text = r.take(text_len, "config text");
  const auto kv = parse_key_values(std::string(text, text_len), "checkpoint");
  ConfigReader cr(kv);
  Checkpoint ck;
  ck.config = read_model(cr, ModelConfig{}, true);
  cr.require_all_used();
  ck.config.validate();
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    const char* name = r.take(len, "tensor name");
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    Matrix m(rows, cols);
    r.need(static_cast<std::size_t>(rows) * cols * sizeof(double), "tensor data");
    for (auto& v : m.data()) v = r.get<double>("tensor data");
    ck.params.tensors.emplace(std::string(name, len), std::move(m));
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint tensors");
  check_params(ck.config, ck.params);
  return ck;
}

inline void write_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
  const auto bytes = encode_checkpoint(cfg, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace braintim
