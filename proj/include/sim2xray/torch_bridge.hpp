#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sim2xray/features.hpp"
#include "sim2xray/image.hpp"
#include "sim2xray/weights_io.hpp"

namespace sim2xray {

// Image (H x W x C) <-> float tensor [C, H, W].
torch::Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const torch::Tensor& chw);

// Stacks images into [B, C, H, W]. All images must share one shape.
torch::Tensor images_to_batch(std::span<const Image> images);
torch::Tensor images_to_batch(const std::vector<const Image*>& images);

// Sample `index` of per-block token tensors [B, n, d] as a FeatureStack.
FeatureStack to_feature_stack(const std::vector<torch::Tensor>& blocks, const std::vector<int>& block_ids,
                              std::int64_t index);

// FNV-1a over every parameter's bytes, in registration order.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

// Trainable scalars only; frozen parameters are excluded.
std::int64_t count_parameters(const torch::nn::Module& module);

std::vector<NamedTensor> export_parameters(const torch::nn::Module& module, const std::string& prefix);

// Copies tensors named `prefix + parameter name` into the module. Throws ShapeError
// on a shape mismatch and IoError when a parameter is missing from `tensors`.
void import_parameters(torch::nn::Module& module, const std::vector<NamedTensor>& tensors,
                       const std::string& prefix);

}  // namespace sim2xray
