#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sim2xray/config.hpp"
#include "sim2xray/data.hpp"

// Small, fast settings for training-path tests.
inline nlohmann::json tiny_config_json(const std::filesystem::path& corpus, const std::filesystem::path& out) {
  return {
      {"data", {{"dir_x", (corpus / "x").string()}, {"dir_y", (corpus / "y").string()}, {"image_size", 64}}},
      {"tokenizer", {{"patch_size", 8}, {"dim", 16}, {"depth", 2}, {"heads", 2}, {"block_ids", {1, 2}}}},
      {"generator", {{"width", 4}, {"downsample", 2}, {"residual_blocks", 1}}},
      {"discriminator", {{"hidden", 16}}},
      {"training", {{"seed", 3}, {"epochs", 1}, {"batch_size", 2}}},
      {"out", out.string()},
  };
}

inline sim2xray::TrainConfig tiny_config(const std::filesystem::path& corpus, const std::filesystem::path& out) {
  return sim2xray::config_from_json(tiny_config_json(corpus, out));
}

inline void write_tiny_corpus(const std::filesystem::path& dir, std::uint64_t seed = 1, int n = 4) {
  sim2xray::SynthOptions o;
  o.seed = seed;
  o.n_x = n;
  o.n_y = n;
  o.image_size = 64;
  sim2xray::synth_corpus(o, dir);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}
