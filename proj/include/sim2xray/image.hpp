#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace sim2xray {

// A single frame stored height-major, channels interleaved (H x W x C).
// Pixel values are normalized to [-1, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int y, int x, int c) { return data[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data[index(y, x, c)]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
};

// True when every value is finite and inside [-1, 1].
bool in_unit_range(const Image& image);

using PatchMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Splits an image into non-overlapping P x P patches in row-major grid order.
// Row k holds patch k flattened as (py, px, c). Throws ShapeError when H or W
// is not divisible by patch_size.
PatchMatrix patchify(const Image& image, int patch_size);

// Inverse tiling of patchify.
Image unpatchify(const PatchMatrix& patches, int height, int width, int channels, int patch_size);

}  // namespace sim2xray
