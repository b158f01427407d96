#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sim2xray/matching.hpp"
#include "sim2xray/networks.hpp"
#include "sim2xray/tokenizer.hpp"

namespace sim2xray {

enum class Ablation { full, no_self, no_cross, gan_only };
enum class AdversarialForm { saturating, non_saturating };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);  // throws ConfigError("training.ablation")
std::string to_string(AdversarialForm f);
std::string to_string(DistanceMode m);

struct DataConfig {
  std::string dir_x;
  std::string dir_y;
  int image_size = 64;
  int channels = 1;
};

struct TrainingConfig {
  std::uint64_t seed = 0;
  int epochs = 20;
  int batch_size = 4;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  AdversarialForm adversarial = AdversarialForm::saturating;
  Ablation ablation = Ablation::full;
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  bool deterministic = true;  // single intra-op thread
};

// Every hyperparameter of one training run.
struct TrainConfig {
  DataConfig data;
  std::string tokenizer_source = "scratch";
  TokenizerConfig tokenizer;
  std::vector<int> block_ids;  // empty = default_block_ids(tokenizer.depth)
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LossConfig loss;
  TrainingConfig training;
  std::string out_dir = "run";

  // Fills derived fields (channels, discriminator input, block ids, seeds) and
  // applies the ablation override to alpha/lambda. Idempotent.
  void finalize();
  void validate() const;
};

// Alpha/lambda after the ablation override: no_self => alpha 0, no_cross =>
// alpha 1, gan_only => lambda 0.
LossConfig effective_loss(const LossConfig& loss, Ablation ablation);

// Strict schema: unknown keys and type errors raise ConfigError naming the key
// path. Relative data/out/tokenizer paths are resolved against `base_dir`.
TrainConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json config_to_json(const TrainConfig& config);

// YAML (or JSON) file; relative paths are resolved against the file's directory.
// `overrides` is merged into the parsed document (JSON merge patch) before validation.
TrainConfig load_config(const std::filesystem::path& path, const nlohmann::json& overrides = nlohmann::json::object());

nlohmann::json yaml_text_to_json(const std::string& text);

}  // namespace sim2xray
