#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sim2xray/config.hpp"
#include "sim2xray/data.hpp"
#include "sim2xray/matching.hpp"
#include "sim2xray/networks.hpp"
#include "sim2xray/tokenizer.hpp"

namespace sim2xray {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside every log.
inline constexpr double kProbClamp = 1e-7;

// -mean log D(y) - mean log(1 - D(G(x))) from raw logits, in double precision.
torch::Tensor discriminator_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);

// Per-sample adversarial generator term: log(1 - D(G(x))) for the saturating
// form, -log D(G(x)) for the non-saturating one. Double precision, shape [B].
torch::Tensor generator_adversarial_terms(const torch::Tensor& logits_fake, AdversarialForm form);

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  LossReport losses;
  double seconds = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  LossReport mean;
  double seconds = 0.0;
  std::int64_t steps = 0;
};

struct TrainSummary {
  std::vector<EpochRecord> epochs;
  std::filesystem::path checkpoint;
  std::uint64_t checkpoint_checksum = 0;
  double total_seconds = 0.0;
  double seconds_per_epoch() const;
};

class Trainer {
 public:
  // Builds the frozen tokenizer, G and D from a finalized config.
  explicit Trainer(TrainConfig config);

  // One discriminator update. G's output is detached; only D moves.
  // Returns l_d. Throws NumericError naming `batch_index` on a non-finite loss.
  double discriminator_step(const torch::Tensor& batch_x, const torch::Tensor& batch_y, std::int64_t batch_index = 0);

  // One generator update with D frozen. Fills l_g, l_self, l_cross and l_sem.
  LossReport generator_step(const torch::Tensor& batch_x, std::int64_t batch_index = 0);

  // Independent seeded shuffles of both domains; D step then G step per batch.
  // Batches per epoch = ceil(max(|X|, |Y|) / batch_size), indices wrap around.
  EpochRecord run_epoch(const UnpairedDataset& dataset, int epoch,
                        const std::function<void(const StepRecord&)>& on_step = {});

  // Full run: metrics.jsonl, epochs.jsonl, periodic and final checkpoints in `out_dir`.
  TrainSummary train(const UnpairedDataset& dataset, const std::filesystem::path& out_dir);

  void save_checkpoint(const std::filesystem::path& path) const;

  const TrainConfig& config() const { return config_; }
  Tokenizer& tokenizer() { return tokenizer_; }
  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }
  std::int64_t step() const { return step_; }

  // D logits for a batch of images through the frozen tokenizer.
  torch::Tensor discriminator_logits(const torch::Tensor& images);

 private:
  TrainConfig config_;
  Tokenizer tokenizer_{nullptr};
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::int64_t step_ = 0;
};

// Generator, discriminator and tokenizer restored from a checkpoint file.
struct TranslationModel {
  TrainConfig config;
  Tokenizer tokenizer{nullptr};
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::int64_t step = 0;
};

TranslationModel load_checkpoint(const std::filesystem::path& path);

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::vector<double> per_image_ms;
};

LatencyStats latency_stats(std::vector<double> per_image_ms);

struct TranslateResult {
  std::vector<Image> images;
  LatencyStats latency;
};

// G in evaluation mode, one image at a time. Throws ShapeError when an image
// disagrees with the checkpoint's channel count or size constraints.
TranslateResult translate(Generator& generator, const std::vector<Image>& images);

// Loss record as one JSON line.
std::string step_record_json(const StepRecord& record);
std::string epoch_record_json(const EpochRecord& record);

}  // namespace sim2xray
