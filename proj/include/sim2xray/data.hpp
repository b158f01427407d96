#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sim2xray/image.hpp"
#include "sim2xray/png_io.hpp"

namespace sim2xray {

// 0 -> -1, 255 -> 1.
inline float normalize_u8(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }
std::uint8_t denormalize_u8(float v);

Image from_raw(const RawImage& raw);
RawImage to_raw(const Image& image);

// Half-pixel-centre bilinear resampling with edge clamping.
Image resize_bilinear(const Image& image, int out_height, int out_width);

// 1 <-> 3 channels; RGB to gray uses ITU-R 601 luma weights.
Image convert_channels(const Image& image, int channels);

// Decode, bilinear resize to image_size x image_size, channel conversion, [-1, 1] normalization.
Image preprocess(std::span<const std::uint8_t> png_bytes, int image_size, int channels);

struct ImageFolder {
  std::vector<Image> images;
  std::vector<std::string> names;  // file names, sorted
};

// Loads every *.png in `dir`. Undecodable files are skipped and reported in
// `warnings`; an empty or fully undecodable directory throws IoError.
ImageFolder load_folder(const std::filesystem::path& dir, int image_size, int channels,
                        std::vector<std::string>* warnings = nullptr);

// Two independent image lists; no pairing between x[i] and y[i] exists.
struct UnpairedDataset {
  ImageFolder x;  // simulation-style
  ImageFolder y;  // X-ray-style
};

UnpairedDataset load_unpaired(const std::filesystem::path& dir_x, const std::filesystem::path& dir_y,
                              int image_size, int channels, std::vector<std::string>* warnings = nullptr);

struct SynthOptions {
  std::uint64_t seed = 1;
  int n_x = 8;
  int n_y = 8;
  int image_size = 64;
};

// Grayscale 8-bit frames. Domain x: bright thin curves on a dark field.
// Domain y: the same kind of curves over soft vessel ridges, blurred, with grain.
RawImage synth_x_image(std::uint64_t seed, int index, int image_size);
RawImage synth_y_image(std::uint64_t seed, int index, int image_size);

struct SynthResult {
  std::vector<std::filesystem::path> files_x;
  std::vector<std::filesystem::path> files_y;
  std::filesystem::path manifest;
};

// Writes <out>/x/sim_NNNN.png, <out>/y/xray_NNNN.png and <out>/manifest.json.
SynthResult synth_corpus(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace sim2xray
