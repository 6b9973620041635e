#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dance/hash.hpp"
#include "dance/serialize.hpp"

namespace dance {

// Weights file: "DNCW", u16 version, u32 header length, JSON header, raw
// little-endian f64 per layer in spec order, trailing CRC32 of all prior bytes.
namespace dncw {

constexpr uint16_t kVersion = 1;

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

inline uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace dncw

inline std::string encode_weights(const ModelSpec& spec, const Weights& weights) {
  json header;
  header["spec"] = spec_to_json(spec);
  header["seed"] = weights.seed;
  header["config_hash"] = weights.config_hash;
  const std::string header_str = header.dump();

  std::string out = "DNCW";
  dncw::put_u16(out, dncw::kVersion);
  dncw::put_u32(out, static_cast<uint32_t>(header_str.size()));
  out += header_str;
  for (const auto& lp : weights.params)
    for (const Tensor& t : lp) {
      static_assert(sizeof(double) == 8);
      const size_t bytes = static_cast<size_t>(t.size()) * 8;
      size_t off = out.size();
      out.resize(off + bytes);
      std::memcpy(out.data() + off, t.data(), bytes);  // little-endian host
    }
  dncw::put_u32(out, crc32(out.data(), out.size()));
  return out;
}

inline void save_weights(const ModelSpec& spec, const Weights& weights, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  const std::string bytes = encode_weights(spec, weights);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("short write to '" + path + "'");
}

inline Model load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 14 || bytes.compare(0, 4, "DNCW") != 0)
    throw ConfigError("'" + path + "' is not a DNCW weights file");
  uint16_t version = dncw::get_u16(p + 4);
  if (version != dncw::kVersion)
    throw ConfigError("weights file version " + std::to_string(version) + " not supported (want " +
                      std::to_string(dncw::kVersion) + ")");

  uint32_t stored_crc = dncw::get_u32(p + bytes.size() - 4);
  uint32_t actual_crc = crc32(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual_crc) throw ConfigError("weights file checksum mismatch in '" + path + "'");

  uint32_t header_len = dncw::get_u32(p + 6);
  size_t pos = 10;
  if (pos + header_len + 4 > bytes.size()) throw ConfigError("truncated weights header");
  json header = json::parse(bytes.substr(pos, header_len));
  pos += header_len;

  Model model;
  model.spec = spec_from_json(header.at("spec"));
  model.weights.seed = header.at("seed").get<uint64_t>();
  model.weights.config_hash = header.at("config_hash").get<std::string>();

  // Parameter shapes are implied by the spec, which keeps the payload compact.
  Weights shapes = init_weights(model.spec, 0);
  model.weights.params.resize(shapes.params.size());
  for (size_t li = 0; li < shapes.params.size(); ++li)
    for (const Tensor& proto : shapes.params[li]) {
      Tensor t(proto.shape());
      const size_t nbytes = static_cast<size_t>(t.size()) * 8;
      if (pos + nbytes + 4 > bytes.size()) throw ConfigError("truncated weights payload");
      std::memcpy(t.data(), bytes.data() + pos, nbytes);
      pos += nbytes;
      model.weights.params[li].push_back(std::move(t));
    }
  if (pos + 4 != bytes.size()) throw ConfigError("trailing bytes in weights file");
  if (!model.weights.all_finite()) throw NumericError("non-finite weights in '" + path + "'");
  return model;
}

}  // namespace dance
