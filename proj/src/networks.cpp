#include "sim2xray/networks.hpp"

#include <string>

#include "sim2xray/errors.hpp"
#include "sim2xray/torch_bridge.hpp"

namespace sim2xray {

namespace nn = torch::nn;

void GeneratorConfig::validate() const {
  if (in_channels < 1) throw ConfigError("generator.in_channels", "must be >= 1");
  if (out_channels < 1) throw ConfigError("generator.out_channels", "must be >= 1");
  if (width < 1) throw ConfigError("generator.width", "must be >= 1");
  if (downsample < 0 || downsample > 4) throw ConfigError("generator.downsample", "must lie in 0..4");
  if (residual_blocks < 0) throw ConfigError("generator.residual_blocks", "must be >= 0");
}

void DiscriminatorConfig::validate() const {
  if (input_dim < 1) throw ConfigError("discriminator.input_dim", "must be >= 1");
  if (hidden < 0) throw ConfigError("discriminator.hidden", "must be >= 0");
}

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int padding = 0) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

nn::InstanceNorm2d inorm(int channels) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels)); }

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  body_ = register_module("body", nn::Sequential(nn::ReflectionPad2d(1), conv(channels, channels, 3), inorm(channels),
                                                 nn::ReLU(), nn::ReflectionPad2d(1), conv(channels, channels, 3),
                                                 inorm(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  torch::manual_seed(config_.seed);
  nn::Sequential seq;
  seq->push_back(nn::ReflectionPad2d(3));
  seq->push_back(conv(config_.in_channels, config_.width, 7));
  seq->push_back(inorm(config_.width));
  seq->push_back(nn::ReLU());
  int ch = config_.width;
  for (int i = 0; i < config_.downsample; ++i) {
    seq->push_back(conv(ch, ch * 2, 3, 2, 1));
    seq->push_back(inorm(ch * 2));
    seq->push_back(nn::ReLU());
    ch *= 2;
  }
  for (int i = 0; i < config_.residual_blocks; ++i) seq->push_back(ResidualBlock(ch));
  for (int i = 0; i < config_.downsample; ++i) {
    seq->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(ch, ch / 2, 3).stride(2).padding(1).output_padding(1)));
    seq->push_back(inorm(ch / 2));
    seq->push_back(nn::ReLU());
    ch /= 2;
  }
  seq->push_back(nn::ReflectionPad2d(3));
  auto head = conv(ch, config_.out_channels, 7);
  if (config_.zero_init_output) {
    torch::NoGradGuard no_grad;
    head->weight.zero_();
    head->bias.zero_();
  }
  seq->push_back(head);
  seq->push_back(nn::Tanh());
  body_ = register_module("body", seq);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw ShapeError("generator expects [B, " + std::to_string(config_.in_channels) + ", H, W] input");
  }
  const auto factor = std::int64_t{1} << config_.downsample;
  if (x.size(2) % factor != 0 || x.size(3) % factor != 0) {
    throw ShapeError("generator input sides must be divisible by " + std::to_string(factor));
  }
  return body_->forward(x);
}

std::int64_t generator_parameter_formula(const GeneratorConfig& c) {
  auto conv_params = [](std::int64_t in, std::int64_t out, std::int64_t k) { return in * out * k * k + out; };
  std::int64_t total = conv_params(c.in_channels, c.width, 7);
  std::int64_t ch = c.width;
  for (int i = 0; i < c.downsample; ++i, ch *= 2) total += conv_params(ch, ch * 2, 3);
  total += c.residual_blocks * 2 * conv_params(ch, ch, 3);
  for (int i = 0; i < c.downsample; ++i, ch /= 2) total += conv_params(ch, ch / 2, 3);
  return total + conv_params(ch, c.out_channels, 7);
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) : config_(config) {
  config_.validate();
  torch::manual_seed(config_.seed);
  nn::Sequential seq;
  nn::Linear out{nullptr};
  if (config_.hidden > 0) {
    seq->push_back(nn::Linear(config_.input_dim, config_.hidden));
    seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    out = nn::Linear(config_.hidden, 1);
  } else {
    out = nn::Linear(config_.input_dim, 1);
  }
  if (config_.zero_init) {
    torch::NoGradGuard no_grad;
    out->weight.zero_();
    out->bias.zero_();
  }
  seq->push_back(out);
  body_ = register_module("body", seq);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& pooled) {
  if (pooled.dim() != 2 || pooled.size(1) != config_.input_dim) {
    throw ShapeError("discriminator expects [B, " + std::to_string(config_.input_dim) + "] features");
  }
  return body_->forward(pooled).squeeze(1);
}

Generator build_generator(const GeneratorConfig& config) { return Generator(config); }

Discriminator build_discriminator(const DiscriminatorConfig& config) { return Discriminator(config); }

torch::Tensor pool_tokens(const torch::Tensor& tokens) { return tokens.mean(1); }

Image generate(Generator& generator, const Image& image) {
  if (image.channels != generator->config().in_channels) {
    throw ShapeError("generator expects " + std::to_string(generator->config().in_channels) + " channels");
  }
  torch::NoGradGuard no_grad;
  const bool was_training = generator->is_training();
  generator->eval();
  auto out = generator->forward(image_to_tensor(image).unsqueeze(0));
  generator->train(was_training);
  return tensor_to_image(out);
}

double discriminate(Discriminator& discriminator, const FeatureStack& features) {
  features.validate();
  const auto& deepest = features.deepest().tokens;
  if (deepest.cols() != discriminator->config().input_dim) {
    throw ShapeError("feature dimension " + std::to_string(deepest.cols()) + " does not match discriminator input " +
                     std::to_string(discriminator->config().input_dim));
  }
  torch::NoGradGuard no_grad;
  auto tokens = torch::from_blob(const_cast<double*>(deepest.data()), {1, deepest.rows(), deepest.cols()},
                                 torch::kFloat64)
                    .to(torch::kFloat32);
  return torch::sigmoid(discriminator->forward(pool_tokens(tokens)).to(torch::kFloat64)).item<double>();
}

}  // namespace sim2xray
