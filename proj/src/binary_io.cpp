// SPDX-License-Identifier: Apache-2.0
#include "binary_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mdunet/error.hpp"

namespace mdunet::io {
namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

std::string read_bytes(const std::filesystem::path& path, const std::string& context) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingData, context + ": cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const std::filesystem::path& path, const char* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

}  // namespace

void append_f32_le(std::string& out, const float* values, std::size_t n) {
  const std::size_t base = out.size();
  out.resize(base + 4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(out.data() + base + 4 * i, &le, 4);
  }
}

void read_f32_le(const char* bytes, float* values, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t le;
    std::memcpy(&le, bytes + 4 * i, 4);
    values[i] = std::bit_cast<float>(to_le(le));
  }
}

void write_f32(const std::filesystem::path& path, const std::vector<float>& values) {
  std::string bytes;
  append_f32_le(bytes, values.data(), values.size());
  write_bytes(path, bytes.data(), bytes.size());
}

std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count,
                            const std::string& context) {
  const std::string bytes = read_bytes(path, context);
  if (bytes.size() != 4 * expected_count) {
    fail(ErrorKind::ShapeMismatch, context + ": " + path.filename().string() + " holds " +
                                       std::to_string(bytes.size()) + " bytes, expected " +
                                       std::to_string(4 * expected_count));
  }
  std::vector<float> v(expected_count);
  read_f32_le(bytes.data(), v.data(), expected_count);
  return v;
}

void write_u8(const std::filesystem::path& path, const std::vector<unsigned char>& values) {
  write_bytes(path, reinterpret_cast<const char*>(values.data()), values.size());
}

std::vector<unsigned char> read_u8(const std::filesystem::path& path, std::size_t expected_count,
                                   const std::string& context) {
  const std::string bytes = read_bytes(path, context);
  if (bytes.size() != expected_count) {
    fail(ErrorKind::ShapeMismatch, context + ": " + path.filename().string() + " holds " +
                                       std::to_string(bytes.size()) + " bytes, expected " +
                                       std::to_string(expected_count));
  }
  return {bytes.begin(), bytes.end()};
}

std::string read_text(const std::filesystem::path& path) {
  return read_bytes(path, "read");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

}  // namespace mdunet::io
