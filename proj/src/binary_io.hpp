// SPDX-License-Identifier: Apache-2.0
// Little-endian raw array files.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mdunet::io {

void write_f32(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<float> read_f32(const std::filesystem::path& path, std::size_t expected_count,
                            const std::string& context);
void write_u8(const std::filesystem::path& path, const std::vector<unsigned char>& values);
std::vector<unsigned char> read_u8(const std::filesystem::path& path, std::size_t expected_count,
                                   const std::string& context);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Appends float32 values in little-endian byte order.
void append_f32_le(std::string& out, const float* values, std::size_t n);
void read_f32_le(const char* bytes, float* values, std::size_t n);

}  // namespace mdunet::io
