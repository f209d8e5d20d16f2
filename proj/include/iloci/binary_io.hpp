#pragma once

// Little helpers for the versioned, checksummed binary files (weights,
// memory snapshots, processed-corpus caches). Layout of every file:
//
//   magic[8] | u32 version | u64 payload size | payload | u64 FNV-1a(payload)
//
// Doubles are stored as their raw IEEE-754 bits so round trips are exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "errors.hpp"

namespace iloci::io {

static_assert(std::endian::native == std::endian::little, "binary format assumes little-endian host");

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf_.append(raw, sizeof(T));
  }

  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    buf_.append(s);
  }

  void put_doubles(const double* data, std::size_t n) {
    put<std::uint64_t>(n);
    buf_.append(reinterpret_cast<const char*>(data), n * sizeof(double));
  }

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    auto n = get<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::vector<double> get_doubles() {
    auto n = get<std::uint64_t>();
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }

  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) throw CorruptFileError("truncated payload");
  }

  std::string buf_;
  std::size_t pos_ = 0;
};

inline std::string frame(std::string_view magic, std::uint32_t version, const std::string& payload) {
  Writer w;
  std::string out(magic.substr(0, 8));
  out.resize(8, '\0');
  w.put<std::uint32_t>(version);
  w.put<std::uint64_t>(payload.size());
  out += w.bytes();
  out += payload;
  Writer tail;
  tail.put<std::uint64_t>(fnv1a(payload));
  out += tail.bytes();
  return out;
}

/// Validates magic, version and checksum; returns the payload.
inline std::string unframe(std::string_view magic, std::uint32_t version, const std::string& file) {
  constexpr std::size_t head = 8 + 4 + 8;
  if (file.size() < head + 8) throw CorruptFileError("file too short");
  std::string m(magic.substr(0, 8));
  m.resize(8, '\0');
  if (file.compare(0, 8, m) != 0) throw CorruptFileError("bad magic, expected " + std::string(magic));
  Reader r(file.substr(8, 12));
  auto v = r.get<std::uint32_t>();
  auto n = r.get<std::uint64_t>();
  if (v != version)
    throw VersionMismatchError("format version " + std::to_string(v) + ", expected " + std::to_string(version));
  if (file.size() != head + n + 8) throw CorruptFileError("payload size mismatch");
  std::string payload = file.substr(head, n);
  Reader tail(file.substr(head + n));
  if (tail.get<std::uint64_t>() != fnv1a(payload)) throw CorruptFileError("checksum mismatch");
  return payload;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace iloci::io
