#include "sim2xray/image.hpp"

#include <cmath>
#include <string>

#include "sim2xray/errors.hpp"

namespace sim2xray {

bool in_unit_range(const Image& image) {
  for (float v : image.data) {
    if (!std::isfinite(v) || v < -1.0f || v > 1.0f) return false;
  }
  return true;
}

namespace {

void check_grid(int height, int width, int channels, int patch_size) {
  if (patch_size <= 0) throw ShapeError("patch size must be positive, got " + std::to_string(patch_size));
  if (height <= 0 || width <= 0 || channels <= 0) throw ShapeError("image has an empty dimension");
  if (height % patch_size != 0 || width % patch_size != 0) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by patch size " + std::to_string(patch_size));
  }
}

}  // namespace

PatchMatrix patchify(const Image& image, int patch_size) {
  check_grid(image.height, image.width, image.channels, patch_size);
  const int grid_w = image.width / patch_size;
  const int n = (image.height / patch_size) * grid_w;
  const int len = patch_size * patch_size * image.channels;
  PatchMatrix out(n, len);
  for (int k = 0; k < n; ++k) {
    const int y0 = (k / grid_w) * patch_size;
    const int x0 = (k % grid_w) * patch_size;
    int col = 0;
    for (int py = 0; py < patch_size; ++py)
      for (int px = 0; px < patch_size; ++px)
        for (int c = 0; c < image.channels; ++c) out(k, col++) = image.at(y0 + py, x0 + px, c);
  }
  return out;
}

Image unpatchify(const PatchMatrix& patches, int height, int width, int channels, int patch_size) {
  check_grid(height, width, channels, patch_size);
  const int grid_w = width / patch_size;
  const int n = (height / patch_size) * grid_w;
  if (patches.rows() != n || patches.cols() != patch_size * patch_size * channels) {
    throw ShapeError("patch matrix shape does not match the requested image geometry");
  }
  Image out(height, width, channels);
  for (int k = 0; k < n; ++k) {
    const int y0 = (k / grid_w) * patch_size;
    const int x0 = (k % grid_w) * patch_size;
    int col = 0;
    for (int py = 0; py < patch_size; ++py)
      for (int px = 0; px < patch_size; ++px)
        for (int c = 0; c < channels; ++c) out.at(y0 + py, x0 + px, c) = patches(k, col++);
  }
  return out;
}

}  // namespace sim2xray
