#include "sim2xray/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include <torch/script.h>

#include "sim2xray/errors.hpp"
#include "sim2xray/frechet.hpp"
#include "sim2xray/networks.hpp"
#include "sim2xray/torch_bridge.hpp"

namespace sim2xray {

TokenizerEmbedder::TokenizerEmbedder(Tokenizer tokenizer, int block_id)
    : tokenizer_(std::move(tokenizer)), block_id_(block_id) {
  if (block_id_ < 1 || block_id_ > tokenizer_->config().depth) {
    throw ConfigError("tokenizer.block_ids", "embedder block outside 1..depth");
  }
}

Eigen::VectorXd TokenizerEmbedder::embed(const Image& image) {
  torch::NoGradGuard no_grad;
  const auto tokens = tokenizer_->extract(image_to_tensor(image).unsqueeze(0), {block_id_}).back();
  const auto pooled = pool_tokens(tokens).squeeze(0).to(torch::kFloat64).contiguous();
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(pooled.data_ptr<double>(), pooled.numel());
  if (!v.allFinite()) throw NumericError("non-finite embedding");
  return v;
}

int TokenizerEmbedder::dim() const { return tokenizer_->config().dim; }

struct TorchScriptEmbedder::Impl {
  torch::jit::script::Module module;
  int input_size;
  int channels;
  int dim = -1;
};

TorchScriptEmbedder::TorchScriptEmbedder(const std::string& path, int input_size, int channels)
    : impl_(std::make_unique<Impl>()), path_(path) {
  try {
    impl_->module = torch::jit::load(path);
  } catch (const c10::Error& e) {
    throw IoError("cannot load TorchScript embedder " + path + ": " + e.what_without_backtrace());
  }
  impl_->module.eval();
  impl_->input_size = input_size;
  impl_->channels = channels;
}

TorchScriptEmbedder::~TorchScriptEmbedder() = default;

Eigen::VectorXd TorchScriptEmbedder::embed(const Image& image) {
  torch::NoGradGuard no_grad;
  auto x = image_to_tensor(image).unsqueeze(0);
  if (x.size(1) != impl_->channels) {
    x = x.size(1) == 1 ? x.expand({1, impl_->channels, x.size(2), x.size(3)}).contiguous()
                       : x.mean(1, true).expand({1, impl_->channels, x.size(2), x.size(3)}).contiguous();
  }
  x = torch::nn::functional::interpolate(
      x, torch::nn::functional::InterpolateFuncOptions()
             .size(std::vector<int64_t>{impl_->input_size, impl_->input_size})
             .mode(torch::kBilinear)
             .align_corners(false));
  auto out = impl_->module.forward({x}).toTensor().flatten().to(torch::kFloat64).contiguous();
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(out.data_ptr<double>(), out.numel());
  if (impl_->dim < 0) impl_->dim = static_cast<int>(v.size());
  if (!v.allFinite()) throw NumericError("non-finite embedding");
  return v;
}

int TorchScriptEmbedder::dim() const { return impl_->dim; }

std::unique_ptr<Embedder> make_embedder(const std::string& spec, const TranslationModel& model) {
  if (spec == "tokenizer") return std::make_unique<TokenizerEmbedder>(model.tokenizer, model.config.block_ids.back());
  const std::string prefix = "classifier:";
  if (spec.rfind(prefix, 0) == 0 && spec.size() > prefix.size()) {
    return std::make_unique<TorchScriptEmbedder>(spec.substr(prefix.size()));
  }
  throw ConfigError("embedder", "expected 'tokenizer' or 'classifier:<path>', got '" + spec + "'");
}

Eigen::MatrixXd embed_set(const std::vector<Image>& images, Embedder& embedder) {
  if (images.size() < 2) throw ShapeError("embedding a set needs at least 2 images");
  Eigen::MatrixXd rows;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto v = embedder.embed(images[i]);
    if (i == 0) rows.resize(static_cast<Eigen::Index>(images.size()), v.size());
    if (v.size() != rows.cols()) throw ShapeError("embedder returned vectors of different lengths");
    rows.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return rows;
}

double image_set_fid(const std::vector<Image>& a, const std::vector<Image>& b, Embedder& embedder) {
  return frechet_distance(compute_stats(embed_set(a, embedder)), compute_stats(embed_set(b, embedder)));
}

EvalReport eval_run(TranslationModel& model, const UnpairedDataset& dataset, Embedder& embedder,
                    const EvalOptions& options) {
  EvalReport r;
  r.method = options.method;
  r.embedder = embedder.name();
  r.count_x = dataset.x.images.size();
  r.count_y = dataset.y.images.size();

  std::vector<Image> generated;
  if (options.identity) {
    generated = dataset.x.images;
  } else {
    auto t = translate(model.generator, dataset.x.images);
    generated = std::move(t.images);
    r.latency = std::move(t.latency);
  }
  const auto stats_y = compute_stats(embed_set(dataset.y.images, embedder));
  r.fid_generated_vs_y = frechet_distance(compute_stats(embed_set(generated, embedder)), stats_y);
  r.fid_x_vs_y = frechet_distance(compute_stats(embed_set(dataset.x.images, embedder)), stats_y);
  r.param_count = count_parameters(*model.generator);
  r.discriminator_param_count = count_parameters(*model.discriminator);
  return r;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["embedder"] = r.embedder;
  j["fid_generated_vs_y"] = r.fid_generated_vs_y;
  j["fid_x_vs_y"] = r.fid_x_vs_y;
  j["latency_ms"] = {{"mean", r.latency.mean_ms},
                     {"median", r.latency.median_ms},
                     {"p95", r.latency.p95_ms},
                     {"images", r.latency.per_image_ms.size()}};
  j["param_count"] = r.param_count;
  j["discriminator_param_count"] = r.discriminator_param_count;
  j["seconds_per_epoch"] = r.seconds_per_epoch ? nlohmann::ordered_json(*r.seconds_per_epoch) : nlohmann::ordered_json(nullptr);
  j["count_x"] = r.count_x;
  j["count_y"] = r.count_y;
  return j;
}

std::string format_table(const std::vector<EvalReport>& rows) {
  std::size_t wm = 6;
  for (const auto& r : rows) wm = std::max(wm, r.method.size());
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %10s  %8s  %14s\n", static_cast<int>(wm), "Method", "FID", "#Param",
                "Training Time");
  os << line << std::string(wm + 40, '-') << '\n';
  for (const auto& r : rows) {
    char params[32];
    std::snprintf(params, sizeof params, "%.2fM", static_cast<double>(r.param_count) / 1e6);
    char time[32];
    if (r.seconds_per_epoch) std::snprintf(time, sizeof time, "%.1fs/epoch", *r.seconds_per_epoch);
    else std::snprintf(time, sizeof time, "-");
    std::snprintf(line, sizeof line, "%-*s  %10.2f  %8s  %14s\n", static_cast<int>(wm), r.method.c_str(),
                  r.fid_generated_vs_y, params, time);
    os << line;
  }
  return os.str();
}

}  // namespace sim2xray
