#include "sim2xray/tokenizer.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "sim2xray/errors.hpp"
#include "sim2xray/torch_bridge.hpp"
#include "sim2xray/weights_io.hpp"

namespace sim2xray {

void TokenizerConfig::validate() const {
  if (patch_size < 1) throw ConfigError("tokenizer.patch_size", "must be >= 1");
  if (channels != 1 && channels != 3) throw ConfigError("tokenizer.channels", "must be 1 or 3");
  if (dim < 4 || dim % 4 != 0) throw ConfigError("tokenizer.dim", "must be a positive multiple of 4");
  if (depth < 1) throw ConfigError("tokenizer.depth", "must be >= 1");
  if (heads < 1 || dim % heads != 0) throw ConfigError("tokenizer.heads", "must divide tokenizer.dim");
  if (mlp_ratio < 1) throw ConfigError("tokenizer.mlp_ratio", "must be >= 1");
}

std::vector<int> default_block_ids(int depth) {
  if (depth < 3) {
    std::vector<int> ids;
    for (int i = 1; i <= depth; ++i) ids.push_back(i);
    return ids;
  }
  return {std::max(1, depth / 3), std::max(depth / 3 + 1, (2 * depth) / 3), depth};
}

TransformerBlockImpl::TransformerBlockImpl(int dim, int heads, int mlp_hidden)
    : heads_(heads),
      norm1_(register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
      norm2_(register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
      qkv_(register_module("qkv", torch::nn::Linear(dim, 3 * dim))),
      proj_(register_module("proj", torch::nn::Linear(dim, dim))),
      fc1_(register_module("fc1", torch::nn::Linear(dim, mlp_hidden))),
      fc2_(register_module("fc2", torch::nn::Linear(mlp_hidden, dim))) {}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), n = x.size(1), d = x.size(2);
  const auto head_dim = d / heads_;
  auto qkv = qkv_(norm1_(x)).reshape({b, n, 3, heads_, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];
  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim)), -1);
  auto mixed = torch::matmul(attn, v).transpose(1, 2).reshape({b, n, d});
  auto h = x + proj_(mixed);
  return h + fc2_(torch::gelu(fc1_(norm2_(h))));
}

TokenizerImpl::TokenizerImpl(const TokenizerConfig& config) : config_(config) {
  config_.validate();
  torch::manual_seed(config_.seed);
  const int patch_len = config_.patch_size * config_.patch_size * config_.channels;
  embed_ = register_module("embed", torch::nn::Linear(patch_len, config_.dim));
  if (config_.class_token) {
    class_token_ = register_parameter("class_token", torch::randn({1, 1, config_.dim}) * 0.02);
  }
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < config_.depth; ++i) {
    blocks_->push_back(TransformerBlock(config_.dim, config_.heads, config_.dim * config_.mlp_ratio));
  }
}

torch::Tensor TokenizerImpl::patchify(const torch::Tensor& images) const {
  if (images.dim() != 4) throw ShapeError("tokenizer expects [B, C, H, W] input");
  const auto b = images.size(0), c = images.size(1), h = images.size(2), w = images.size(3);
  const auto p = config_.patch_size;
  if (c != config_.channels) {
    throw ShapeError("tokenizer expects " + std::to_string(config_.channels) + " channels, got " + std::to_string(c));
  }
  if (h % p != 0 || w % p != 0) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch size " +
                     std::to_string(p));
  }
  return images.reshape({b, c, h / p, p, w / p, p})
      .permute({0, 2, 4, 3, 5, 1})
      .reshape({b, (h / p) * (w / p), p * p * c});
}

// Fixed 2-D sine/cosine table: half the channels encode the row, half the column.
torch::Tensor TokenizerImpl::position_embedding(std::int64_t grid_h, std::int64_t grid_w) const {
  const int quarter = config_.dim / 4;
  auto omega = 1.0 / torch::pow(10000.0, torch::arange(quarter, torch::kFloat64) / quarter);
  auto ys = torch::arange(grid_h, torch::kFloat64).repeat_interleave(grid_w);
  auto xs = torch::arange(grid_w, torch::kFloat64).repeat({grid_h});
  auto ey = torch::outer(ys, omega);
  auto ex = torch::outer(xs, omega);
  return torch::cat({torch::sin(ey), torch::cos(ey), torch::sin(ex), torch::cos(ex)}, 1).to(torch::kFloat32);
}

std::vector<torch::Tensor> TokenizerImpl::extract(const torch::Tensor& images, const std::vector<int>& block_ids) {
  if (block_ids.empty()) throw ConfigError("tokenizer.block_ids", "at least one block is required");
  for (std::size_t i = 0; i < block_ids.size(); ++i) {
    if (block_ids[i] < 1 || block_ids[i] > config_.depth) {
      throw ConfigError("tokenizer.block_ids", "block " + std::to_string(block_ids[i]) + " outside 1.." +
                                                   std::to_string(config_.depth));
    }
    if (i > 0 && block_ids[i] <= block_ids[i - 1]) {
      throw ConfigError("tokenizer.block_ids", "block ids must be strictly increasing");
    }
  }
  const auto p = config_.patch_size;
  auto tokens = embed_(patchify(images)) + position_embedding(images.size(2) / p, images.size(3) / p);
  const std::int64_t skip = config_.class_token ? 1 : 0;
  if (config_.class_token) tokens = torch::cat({class_token_.expand({images.size(0), 1, config_.dim}), tokens}, 1);

  std::vector<torch::Tensor> out;
  std::size_t next = 0;
  for (int k = 1; k <= block_ids.back(); ++k) {
    tokens = blocks_[k - 1]->as<TransformerBlock>()->forward(tokens);
    if (k == block_ids[next]) {
      out.push_back(tokens.slice(1, skip));
      ++next;
    }
  }
  return out;
}

void TokenizerImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

Tokenizer build_tokenizer(const TokenizerConfig& config) {
  Tokenizer t(config);
  t->freeze();
  return t;
}

namespace {

nlohmann::json tokenizer_meta(const TokenizerConfig& c) {
  return {{"patch_size", c.patch_size}, {"channels", c.channels}, {"dim", c.dim},   {"depth", c.depth},
          {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio}, {"class_token", c.class_token}, {"seed", c.seed}};
}

}  // namespace

void save_tokenizer(const Tokenizer& tokenizer, const std::filesystem::path& path) {
  const auto& c = tokenizer->config();
  WeightFile file;
  file.kind = WeightKind::tokenizer;
  file.depth = static_cast<std::uint32_t>(c.depth);
  file.dim = static_cast<std::uint32_t>(c.dim);
  file.patch_size = static_cast<std::uint32_t>(c.patch_size);
  file.metadata_json = tokenizer_meta(c).dump();
  file.tensors = export_parameters(*tokenizer, "");
  write_weights(path, file);
}

Tokenizer load_tokenizer(const std::string& source, const TokenizerConfig& config, const TokenizerConfig* expected) {
  if (source == "scratch") return build_tokenizer(config);

  const WeightFile file = read_weights(source);
  if (file.kind != WeightKind::tokenizer) throw IoError(source + " is not a tokenizer weight file");
  TokenizerConfig c;
  try {
    const auto meta = nlohmann::json::parse(file.metadata_json);
    c.channels = meta.at("channels").get<int>();
    c.heads = meta.at("heads").get<int>();
    c.mlp_ratio = meta.at("mlp_ratio").get<int>();
    c.class_token = meta.at("class_token").get<bool>();
    c.seed = meta.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(source + ": bad tokenizer metadata: " + e.what());
  }
  c.depth = static_cast<int>(file.depth);
  c.dim = static_cast<int>(file.dim);
  c.patch_size = static_cast<int>(file.patch_size);
  if (expected && (expected->dim != c.dim || expected->depth != c.depth || expected->patch_size != c.patch_size)) {
    throw ShapeError(source + ": tokenizer file declares d=" + std::to_string(c.dim) + ", depth=" +
                     std::to_string(c.depth) + ", P=" + std::to_string(c.patch_size) + " but the config expects d=" +
                     std::to_string(expected->dim) + ", depth=" + std::to_string(expected->depth) +
                     ", P=" + std::to_string(expected->patch_size));
  }
  Tokenizer t(c);
  import_parameters(*t, file.tensors, "");
  t->freeze();
  return t;
}

FeatureStack extract_features(Tokenizer& tokenizer, const Image& image, const std::vector<int>& block_ids) {
  if (!in_unit_range(image)) throw ShapeError("image values must be finite and inside [-1, 1]");
  torch::NoGradGuard no_grad;
  const auto blocks = tokenizer->extract(image_to_tensor(image).unsqueeze(0), block_ids);
  for (const auto& b : blocks) {
    if (!torch::isfinite(b).all().item<bool>()) {
      throw NumericError("non-finite tokenizer activations; weights are likely corrupt");
    }
  }
  return to_feature_stack(blocks, block_ids, 0);
}

}  // namespace sim2xray
