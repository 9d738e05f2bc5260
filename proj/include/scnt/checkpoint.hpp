#pragma once

// Bit-exact tensor container. Layout, all little-endian:
//   magic "SCNT" | version u32 | tensor count u32
//   per tensor: name-length u16 | name bytes | rank u8 | dims u32 each | f32 payload
// Files are read fully into memory before parsing so truncation errors can
// report exact byte counts.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/tensor.hpp"

namespace scnt {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

inline NamedTensor to_named(const std::string& name, const BasicTensor<float>& t) {
  NamedTensor nt;
  nt.name = name;
  nt.dims = {static_cast<std::uint32_t>(t.n()), static_cast<std::uint32_t>(t.c()),
             static_cast<std::uint32_t>(t.h()), static_cast<std::uint32_t>(t.w())};
  nt.data.assign(t.data(), t.data() + t.size());
  return nt;
}

// Rank must be <= 4; missing leading axes become 1.
inline BasicTensor<float> from_named(const NamedTensor& nt) {
  if (nt.dims.size() > 4) {
    throw std::runtime_error("checkpoint: tensor '" + nt.name + "' has rank " +
                             std::to_string(nt.dims.size()) + ", expected at most 4");
  }
  int d[4] = {1, 1, 1, 1};
  const std::size_t off = 4 - nt.dims.size();
  for (std::size_t i = 0; i < nt.dims.size(); ++i) d[off + i] = static_cast<int>(nt.dims[i]);
  BasicTensor<float> t(d[0], d[1], d[2], d[3]);
  if (t.size() != nt.data.size()) {
    throw std::runtime_error("checkpoint: tensor '" + nt.name + "' dims imply " +
                             std::to_string(t.size()) + " values, payload has " +
                             std::to_string(nt.data.size()));
  }
  std::memcpy(t.data(), nt.data.data(), nt.data.size() * sizeof(float));
  return t;
}

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, std::string path)
      : buf_(buf), path_(std::move(path)) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > buf_.size()) {
      throw std::runtime_error("checkpoint: truncated file '" + path_ + "': expected " +
                               std::to_string(n) + " more bytes for " + what + " at offset " +
                               std::to_string(pos_) + ", only " +
                               std::to_string(buf_.size() - pos_) + " available");
    }
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return buf_[pos_++];
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_]) |
                      static_cast<std::uint16_t>(buf_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void floats(float* dst, std::size_t count, const char* what) {
    need(count * 4, what);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(dst, buf_.data() + pos_, count * 4);
      pos_ += count * 4;
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(buf_[pos_ + b]) << (8 * b);
        std::memcpy(dst + i, &v, 4);
        pos_ += 4;
      }
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors,
                            std::uint32_t version = kCheckpointVersion) {
  std::vector<std::uint8_t> buf;
  buf.reserve(64);
  buf.insert(buf.end(), {'S', 'C', 'N', 'T'});
  detail::put_u32(buf, version);
  detail::put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) {
      throw std::invalid_argument("checkpoint: tensor name longer than 65535 bytes");
    }
    if (t.dims.size() > 0xff) {
      throw std::invalid_argument("checkpoint: tensor rank above 255");
    }
    if (t.numel() != t.data.size()) {
      throw std::invalid_argument("checkpoint: tensor '" + t.name + "' dims imply " +
                                  std::to_string(t.numel()) + " values, payload has " +
                                  std::to_string(t.data.size()));
    }
    detail::put_u16(buf, static_cast<std::uint16_t>(t.name.size()));
    buf.insert(buf.end(), t.name.begin(), t.name.end());
    buf.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_u32(buf, d);
    const std::size_t at = buf.size();
    buf.resize(at + t.data.size() * 4);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(buf.data() + at, t.data.data(), t.data.size() * 4);
    } else {
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        std::uint32_t v;
        std::memcpy(&v, &t.data[i], 4);
        for (int b = 0; b < 4; ++b) {
          buf[at + i * 4 + b] = static_cast<std::uint8_t>((v >> (8 * b)) & 0xff);
        }
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for reading");
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0) f.read(reinterpret_cast<char*>(buf.data()), size);
  if (!f) throw std::runtime_error("checkpoint: read failed for '" + path + "'");

  detail::ByteReader r(buf, path);
  const std::string magic = r.str(4, "magic");
  if (magic != "SCNT") {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "': expected \"SCNT\", got \"" +
                             magic + "\"");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                             " in '" + path + "', expected " + std::to_string(kCheckpointVersion));
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint16_t name_len = r.u16("name length");
    t.name = r.str(name_len, "tensor name");
    const std::uint8_t rank = r.u8("rank");
    t.dims.resize(rank);
    for (int d = 0; d < rank; ++d) t.dims[d] = r.u32("dimension");
    t.data.resize(t.numel());
    r.floats(t.data.data(), t.data.size(), "f32 payload");
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw std::runtime_error("checkpoint: '" + path + "' has " + std::to_string(r.remaining()) +
                             " trailing bytes after the last tensor");
  }
  return out;
}

}  // namespace scnt
