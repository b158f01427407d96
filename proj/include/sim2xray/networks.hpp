#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "sim2xray/features.hpp"
#include "sim2xray/image.hpp"

namespace sim2xray {

struct GeneratorConfig {
  int in_channels = 1;
  int out_channels = 1;
  int width = 64;            // channels after the stem; doubles at each downsampling
  int downsample = 2;
  int residual_blocks = 10;  // 1-channel, width 64: 12,545,793 parameters
  bool zero_init_output = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DiscriminatorConfig {
  int input_dim = 32;  // tokenizer d
  int hidden = 64;     // 0 = single affine layer
  bool zero_init = false;
  std::uint64_t seed = 1;

  void validate() const;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Encoder (7x7 stem, strided 3x3 convs) -> residual blocks -> decoder
// (transposed 3x3 convs, 7x7 head) with instance norm and a tanh output.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Generator);

// MLP head over mean-pooled tokens of the deepest selected block.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& config);
  // pooled [B, d] -> logits [B]
  torch::Tensor forward(const torch::Tensor& pooled);
  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

Generator build_generator(const GeneratorConfig& config);
Discriminator build_discriminator(const DiscriminatorConfig& config);

// Parameter count of the generator from layer arithmetic alone.
std::int64_t generator_parameter_formula(const GeneratorConfig& config);

// Mean over tokens: [B, n, d] -> [B, d].
torch::Tensor pool_tokens(const torch::Tensor& tokens);

// Single-image inference in eval mode.
Image generate(Generator& generator, const Image& image);

// D(features) in (0, 1), from the deepest set of the stack.
double discriminate(Discriminator& discriminator, const FeatureStack& features);

}  // namespace sim2xray
