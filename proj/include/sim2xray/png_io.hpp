#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sim2xray {

// 8-bit interleaved pixels, 1 (gray) or 3 (RGB) channels.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Decodes any PNG; gray sources stay 1 channel, colour sources become RGB, alpha is dropped.
// Throws IoError on malformed input.
RawImage decode_png(std::span<const std::uint8_t> bytes);
RawImage read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const RawImage& image);
void write_png(const std::filesystem::path& path, const RawImage& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace sim2xray
