#include "sim2xray/torch_bridge.hpp"

#include <cstring>
#include <unordered_map>

#include "sim2xray/errors.hpp"

namespace sim2xray {

torch::Tensor image_to_tensor(const Image& image) {
  auto hwc = torch::from_blob(const_cast<float*>(image.data.data()), {image.height, image.width, image.channels},
                              torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

Image tensor_to_image(const torch::Tensor& chw) {
  auto t = chw.dim() == 4 ? chw.squeeze(0) : chw;
  if (t.dim() != 3) throw ShapeError("expected a [C, H, W] tensor");
  t = t.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  Image out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  std::memcpy(out.data.data(), t.data_ptr<float>(), out.size() * sizeof(float));
  return out;
}

torch::Tensor images_to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("empty image batch");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const Image* img : images) {
    if (!img->same_shape(*images.front())) throw ShapeError("images in a batch must share one shape");
    parts.push_back(image_to_tensor(*img));
  }
  return torch::stack(parts);
}

torch::Tensor images_to_batch(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  for (const auto& img : images) ptrs.push_back(&img);
  return images_to_batch(ptrs);
}

FeatureStack to_feature_stack(const std::vector<torch::Tensor>& blocks, const std::vector<int>& block_ids,
                              std::int64_t index) {
  if (blocks.size() != block_ids.size()) throw ShapeError("one block id is needed per token tensor");
  FeatureStack stack;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto t = blocks[b][index].detach().to(torch::kFloat64).contiguous();
    TokenSet set;
    set.block_id = block_ids[b];
    set.tokens = Eigen::Map<const TokenMatrix>(t.data_ptr<double>(), t.size(0), t.size(1));
    stack.sets.push_back(std::move(set));
  }
  return stack;
}

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : module.parameters()) {
    auto t = p.detach().to(torch::kFloat32).contiguous();
    h = fnv1a(t.data_ptr<float>(), static_cast<std::size_t>(t.numel()) * sizeof(float), h);
  }
  return h;
}

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters())
    if (p.requires_grad()) n += p.numel();
  return n;
}

std::vector<NamedTensor> export_parameters(const torch::nn::Module& module, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& item : module.named_parameters()) {
    auto t = item.value().detach().to(torch::kFloat32).contiguous();
    NamedTensor nt;
    nt.name = prefix + item.key();
    nt.shape.assign(t.sizes().begin(), t.sizes().end());
    nt.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    out.push_back(std::move(nt));
  }
  return out;
}

namespace {

std::string shape_str(c10::IntArrayRef s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

void import_parameters(torch::nn::Module& module, const std::vector<NamedTensor>& tensors,
                       const std::string& prefix) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters()) {
    const auto name = prefix + item.key();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("weights missing parameter " + name);
    const NamedTensor& src = *it->second;
    auto& dst = item.value();
    if (c10::IntArrayRef(src.shape) != dst.sizes()) {
      throw ShapeError("shape mismatch for " + name + ": file " + shape_str(src.shape) + " vs model " +
                       shape_str(dst.sizes()));
    }
    auto from = torch::from_blob(const_cast<float*>(src.values.data()), dst.sizes(), torch::kFloat32);
    dst.copy_(from);
  }
}

}  // namespace sim2xray
