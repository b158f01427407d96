#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sim2xray/data.hpp"
#include "sim2xray/image.hpp"
#include "sim2xray/tokenizer.hpp"
#include "sim2xray/trainer.hpp"

namespace sim2xray {

// Maps one image to a fixed-length feature vector for Fréchet statistics.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::VectorXd embed(const Image& image) = 0;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;
};

// Desk embedder: mean over tokens of one tokenizer block (m = d).
class TokenizerEmbedder : public Embedder {
 public:
  TokenizerEmbedder(Tokenizer tokenizer, int block_id);
  Eigen::VectorXd embed(const Image& image) override;
  int dim() const override;
  std::string name() const override { return "tokenizer"; }

 private:
  Tokenizer tokenizer_;
  int block_id_;
};

// TorchScript classifier, e.g. an exported Inception network. Images are
// replicated to `channels` and resized to `input_size` before the forward pass;
// the output is flattened to one vector per image.
class TorchScriptEmbedder : public Embedder {
 public:
  explicit TorchScriptEmbedder(const std::string& path, int input_size = 299, int channels = 3);
  ~TorchScriptEmbedder() override;
  Eigen::VectorXd embed(const Image& image) override;
  int dim() const override;
  std::string name() const override { return "classifier:" + path_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string path_;
};

// "tokenizer" or "classifier:<path>".
std::unique_ptr<Embedder> make_embedder(const std::string& spec, const TranslationModel& model);

// One row per image; throws ShapeError for fewer than two images.
Eigen::MatrixXd embed_set(const std::vector<Image>& images, Embedder& embedder);

// Desk-FID between two image sets.
double image_set_fid(const std::vector<Image>& a, const std::vector<Image>& b, Embedder& embedder);

struct EvalReport {
  std::string method;
  std::string embedder;
  double fid_generated_vs_y = 0.0;
  double fid_x_vs_y = 0.0;
  LatencyStats latency;
  std::int64_t param_count = 0;  // trainable generator scalars
  std::int64_t discriminator_param_count = 0;
  std::optional<double> seconds_per_epoch;
  std::size_t count_x = 0;
  std::size_t count_y = 0;
};

struct EvalOptions {
  bool identity = false;  // skip G and score the raw inputs as the translated set
  std::string method = "Sim2Xray";
};

EvalReport eval_run(TranslationModel& model, const UnpairedDataset& dataset, Embedder& embedder,
                    const EvalOptions& options = {});

nlohmann::ordered_json report_to_json(const EvalReport& report);

// Plain-text comparison table: Method | FID | #Param | Training Time.
std::string format_table(const std::vector<EvalReport>& rows);

}  // namespace sim2xray
