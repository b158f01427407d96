#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sim2xray {

// Binary weight container shared by tokenizer files and translation checkpoints.
//
// Layout (little-endian):
//   char[4]  magic "S2XW"
//   u32      format version (kWeightFormatVersion)
//   u32      kind (0 = tokenizer, 1 = translation checkpoint)
//   u32      tokenizer depth
//   u32      tokenizer embedding dimension d
//   u32      tokenizer patch size P
//   u64      training step counter
//   u64      metadata length, then that many bytes of UTF-8 JSON (config echo)
//   u32      tensor count, then per tensor:
//              u32 name length, name bytes, u32 rank, i64 dims[rank], f32 values[prod(dims)]
//   u64      FNV-1a 64 checksum of every preceding byte
inline constexpr std::uint32_t kWeightFormatVersion = 1;

enum class WeightKind : std::uint32_t { tokenizer = 0, checkpoint = 1 };

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  std::int64_t numel() const;
};

struct WeightFile {
  WeightKind kind = WeightKind::tokenizer;
  std::uint32_t depth = 0;
  std::uint32_t dim = 0;
  std::uint32_t patch_size = 0;
  std::uint64_t step = 0;
  std::string metadata_json;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_weights(const WeightFile& file);
// Throws IoError on bad magic, unsupported version, truncation or checksum mismatch.
WeightFile deserialize_weights(const std::vector<std::uint8_t>& bytes);

// Atomic: writes a sibling temp file then renames it over `path`.
void write_weights(const std::filesystem::path& path, const WeightFile& file);
WeightFile read_weights(const std::filesystem::path& path);

// FNV-1a 64-bit.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Atomic text write (temp + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace sim2xray
