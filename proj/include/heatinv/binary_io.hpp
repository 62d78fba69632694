#pragma once

// Container layout shared by dataset, prediction and checkpoint files:
//
//   [u64 little-endian byte count N][N bytes of UTF-8 JSON header][payload]
//
// The payload is a sequence of raw little-endian float32 arrays whose order and
// sizes are described by the header.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatinv/common.hpp"

namespace heatinv::io {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }

  void header(const json& h) {
    const std::string text = h.dump();
    const std::uint64_t n = text.size();
    raw(&n, sizeof n);
    raw(text.data(), text.size());
  }

  template <class T>
  void floats(std::span<const T> values) {
    std::vector<float> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
    raw(buf.data(), buf.size() * sizeof(float));
  }

  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed on '" + path_.string() + "'");
    out_.close();
  }

 private:
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed on '" + path_.string() + "'");
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path.string() + "' for reading");
  }

  json header() {
    std::uint64_t n = 0;
    raw(&n, sizeof n);
    if (n > (std::uint64_t{1} << 32)) throw IoError("implausible header length in '" + path_.string() + "'");
    std::string text(n, '\0');
    raw(text.data(), n);
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw IoError("malformed header in '" + path_.string() + "': " + e.what());
    }
  }

  template <class T>
  void floats(std::span<T> out) {
    std::vector<float> buf(out.size());
    raw(buf.data(), buf.size() * sizeof(float));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(buf[i]);
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated file '" + path_.string() + "'");
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

// Writes via a sibling temporary and renames into place.
template <class Fn>
void write_atomically(const std::filesystem::path& path, Fn&& write) {
  auto tmp = path;
  tmp += ".tmp";
  {
    BinaryWriter w(tmp);
    write(w);
    w.close();
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

}  // namespace heatinv::io
