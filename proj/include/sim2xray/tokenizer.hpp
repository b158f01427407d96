#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sim2xray/features.hpp"
#include "sim2xray/image.hpp"

namespace sim2xray {

struct TokenizerConfig {
  int patch_size = 8;
  int channels = 1;
  int dim = 32;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 2;
  bool class_token = true;
  std::uint64_t seed = 7;

  void validate() const;
  bool operator==(const TokenizerConfig&) const = default;
};

// Three blocks spread over shallow, middle and deep layers (1-based ids).
std::vector<int> default_block_ids(int depth);

// Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x)).
class TransformerBlockImpl : public torch::nn::Module {
 public:
  TransformerBlockImpl(int dim, int heads, int mlp_hidden);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int heads_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TransformerBlock);

// Patch-token extractor in the ViT style. Block ids are 1-based: id k is the
// output of the k-th transformer block. The summary (class) token takes part in
// attention but is stripped from every returned token set, so n = (H/P)(W/P).
class TokenizerImpl : public torch::nn::Module {
 public:
  explicit TokenizerImpl(const TokenizerConfig& config);

  // images [B, C, H, W] -> patches [B, n, P*P*C], same ordering as sim2xray::patchify.
  torch::Tensor patchify(const torch::Tensor& images) const;

  // Token tensors [B, n, d], one per requested block id (strictly increasing).
  std::vector<torch::Tensor> extract(const torch::Tensor& images, const std::vector<int>& block_ids);

  const TokenizerConfig& config() const { return config_; }

  // Marks every parameter non-trainable and switches to eval mode.
  void freeze();

 private:
  torch::Tensor position_embedding(std::int64_t grid_h, std::int64_t grid_w) const;

  TokenizerConfig config_;
  torch::nn::Linear embed_{nullptr};
  torch::Tensor class_token_;
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(Tokenizer);

// Fresh seeded weights, frozen.
Tokenizer build_tokenizer(const TokenizerConfig& config);

// `source` is either "scratch" (build from `config`) or a weight-file path. When
// loading a file whose header disagrees with `expected` on d, depth or P, throws
// ShapeError; pass nullptr to accept whatever the file declares.
Tokenizer load_tokenizer(const std::string& source, const TokenizerConfig& config,
                         const TokenizerConfig* expected = nullptr);

void save_tokenizer(const Tokenizer& tokenizer, const std::filesystem::path& path);

// Single-image extraction; throws NumericError on non-finite activations.
FeatureStack extract_features(Tokenizer& tokenizer, const Image& image, const std::vector<int>& block_ids);

}  // namespace sim2xray
