#pragma once

// Byte-level utilities: SHA-256 digests (OpenSSL) and an uncompressed ZIP
// writer (CRC-32 from zlib) with fixed timestamps so archives are reproducible.

#include <openssl/evp.h>
#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "delaysense/error.hpp"

namespace delaysense {

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ValidationError, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Entries are written in insertion order with the "stored" method.
class ZipWriter {
 public:
  void add(std::string name, std::string data) { entries_.push_back({std::move(name), std::move(data)}); }

  std::string finish() const {
    std::string out;
    std::string central;
    for (const auto& e : entries_) {
      const auto crc = static_cast<std::uint32_t>(
          crc32(0L, reinterpret_cast<const Bytef*>(e.data.data()), static_cast<uInt>(e.data.size())));
      const auto size = static_cast<std::uint32_t>(e.data.size());
      const auto offset = static_cast<std::uint32_t>(out.size());

      put32(out, 0x04034b50);
      put16(out, 20);  // version needed
      put16(out, 0);   // flags
      put16(out, 0);   // stored
      put16(out, 0);   // mod time 00:00
      put16(out, kDosDate);
      put32(out, crc);
      put32(out, size);
      put32(out, size);
      put16(out, static_cast<std::uint16_t>(e.name.size()));
      put16(out, 0);
      out += e.name;
      out += e.data;

      put32(central, 0x02014b50);
      put16(central, 20);  // made by
      put16(central, 20);
      put16(central, 0);
      put16(central, 0);
      put16(central, 0);
      put16(central, kDosDate);
      put32(central, crc);
      put32(central, size);
      put32(central, size);
      put16(central, static_cast<std::uint16_t>(e.name.size()));
      put16(central, 0);  // extra
      put16(central, 0);  // comment
      put16(central, 0);  // disk
      put16(central, 0);  // internal attrs
      put32(central, 0);  // external attrs
      put32(central, offset);
      central += e.name;
    }
    const auto central_offset = static_cast<std::uint32_t>(out.size());
    out += central;
    put32(out, 0x06054b50);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint16_t>(entries_.size()));
    put16(out, static_cast<std::uint16_t>(entries_.size()));
    put32(out, static_cast<std::uint32_t>(central.size()));
    put32(out, central_offset);
    put16(out, 0);
    return out;
  }

  /// Reads back an archive produced by finish(); used by tests and tools.
  static std::vector<std::pair<std::string, std::string>> read_stored(std::string_view zip) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t pos = 0;
    while (pos + 30 <= zip.size() && get32(zip, pos) == 0x04034b50) {
      if (get16(zip, pos + 8) != 0) throw Error(ErrorCode::ParseError, "compressed zip entry");
      const std::uint32_t size = get32(zip, pos + 18);
      const std::uint16_t name_len = get16(zip, pos + 26);
      const std::uint16_t extra_len = get16(zip, pos + 28);
      const std::size_t name_at = pos + 30;
      const std::size_t data_at = name_at + name_len + extra_len;
      if (data_at + size > zip.size()) throw Error(ErrorCode::ParseError, "truncated zip entry");
      out.emplace_back(std::string(zip.substr(name_at, name_len)), std::string(zip.substr(data_at, size)));
      pos = data_at + size;
    }
    return out;
  }

 private:
  static constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

  static void put16(std::string& s, std::uint16_t v) {
    s += static_cast<char>(v & 0xFF);
    s += static_cast<char>(v >> 8);
  }
  static void put32(std::string& s, std::uint32_t v) {
    put16(s, static_cast<std::uint16_t>(v & 0xFFFF));
    put16(s, static_cast<std::uint16_t>(v >> 16));
  }
  static std::uint16_t get16(std::string_view s, std::size_t at) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) |
                                      (static_cast<unsigned char>(s[at + 1]) << 8));
  }
  static std::uint32_t get32(std::string_view s, std::size_t at) {
    return static_cast<std::uint32_t>(get16(s, at)) | (static_cast<std::uint32_t>(get16(s, at + 2)) << 16);
  }

  struct Entry {
    std::string name;
    std::string data;
  };
  std::vector<Entry> entries_;
};

}  // namespace delaysense
