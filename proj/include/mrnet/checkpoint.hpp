#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mrnet/model.hpp"

// MRNP checkpoint format: magic "MRNP", u16 version = 1, then one entry per
// named parameter: u16 name length + UTF-8 name, u8 rank, u32 dims, and
// row-major little-endian f32 payload. Round trips bit-exactly for float
// parameters.

namespace mrnet {

namespace checkpoint_detail {

constexpr char kMagic[4] = {'M', 'R', 'N', 'P'};
constexpr uint16_t kVersion = 1;

inline void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const uint8_t* p;
  size_t left;
  std::string path;

  void need(size_t n) const {
    if (left < n) throw FormatError(path + ": truncated checkpoint");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    p += 4;
    left -= 4;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

}  // namespace checkpoint_detail

template <typename S>
void save_checkpoint(const std::filesystem::path& path, ModelParamsT<S>& params) {
  namespace cd = checkpoint_detail;
  std::string buf;
  buf.append(cd::kMagic, 4);
  cd::put_u16(buf, cd::kVersion);
  visit_params(params, [&](const std::string& name, TensorT<S>& t) {
    cd::put_u16(buf, static_cast<uint16_t>(name.size()));
    buf.append(name);
    buf.push_back(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) cd::put_u32(buf, static_cast<uint32_t>(t.dim(i)));
    for (int64_t i = 0; i < t.numel(); ++i)
      cd::put_u32(buf, std::bit_cast<uint32_t>(static_cast<float>(t.at(i))));
  });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

// Loads into an existing parameter set; every name must be present with the
// exact shape, and the file may not carry extra entries.
template <typename S>
void load_checkpoint(const std::filesystem::path& path, ModelParamsT<S>& params) {
  namespace cd = checkpoint_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  const std::string bytes = std::move(os).str();
  if (bytes.size() < 6 || std::memcmp(bytes.data(), cd::kMagic, 4) != 0)
    throw FormatError(path.string() + ": not an MRNP checkpoint (bad magic)");
  cd::Reader r{reinterpret_cast<const uint8_t*>(bytes.data()) + 4, bytes.size() - 4,
               path.string()};
  const uint16_t version = r.u16();
  if (version != cd::kVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));

  struct Entry {
    Shape shape;
    std::vector<float> data;
  };
  std::map<std::string, Entry> entries;
  while (r.left > 0) {
    const uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    r.need(1);
    const int rank = *r.p;
    r.p += 1;
    r.left -= 1;
    if (rank < 1 || rank > 3)
      throw FormatError(path.string() + ": parameter '" + name + "' has rank " +
                        std::to_string(rank));
    Entry e;
    int64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      const uint32_t d = r.u32();
      if (d == 0 || d > (1u << 24))
        throw FormatError(path.string() + ": parameter '" + name + "' has bad dim " +
                          std::to_string(d));
      e.shape.push_back(static_cast<int>(d));
      n *= d;
    }
    e.data.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) e.data.push_back(r.f32());
    if (!entries.emplace(name, std::move(e)).second)
      throw FormatError(path.string() + ": duplicate parameter '" + name + "'");
  }

  size_t consumed = 0;
  visit_params(params, [&](const std::string& name, TensorT<S>& t) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw InputError(path.string() + ": checkpoint is missing parameter '" + name + "'");
    if (it->second.shape != t.shape())
      throw InputError(path.string() + ": parameter '" + name + "' has shape " +
                       shape_str(it->second.shape) + ", model expects " + shape_str(t.shape()));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.at(i) = static_cast<S>(it->second.data[static_cast<size_t>(i)]);
    ++consumed;
  });
  if (consumed != entries.size())
    throw InputError(path.string() + ": checkpoint carries " +
                     std::to_string(entries.size() - consumed) + " unknown parameters");
}

}  // namespace mrnet
