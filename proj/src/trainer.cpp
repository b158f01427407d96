#include "sim2xray/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "sim2xray/errors.hpp"
#include "sim2xray/png_io.hpp"
#include "sim2xray/semantic_autograd.hpp"
#include "sim2xray/torch_bridge.hpp"
#include "sim2xray/weights_io.hpp"

namespace sim2xray {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

torch::Tensor clamped_probability(const torch::Tensor& logits) {
  return torch::sigmoid(logits.to(torch::kFloat64)).clamp(kProbClamp, 1.0 - kProbClamp);
}

void require_finite_loss(double value, const char* what, std::int64_t batch_index) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("non-finite ") + what + " at batch " + std::to_string(batch_index));
  }
}

class RequiresGradGuard {
 public:
  RequiresGradGuard(torch::nn::Module& module, bool enabled) : params_(module.parameters()) {
    for (auto& p : params_) {
      saved_.push_back(p.requires_grad());
      p.set_requires_grad(enabled);
    }
  }
  ~RequiresGradGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(saved_[i]);
  }

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> saved_;
};

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return fnv1a(bytes.data(), bytes.size());
}

}  // namespace

torch::Tensor discriminator_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_fake) {
  const auto p_real = clamped_probability(logits_real);
  const auto p_fake = clamped_probability(logits_fake);
  return -torch::log(p_real).mean() - torch::log(1.0 - p_fake).mean();
}

torch::Tensor generator_adversarial_terms(const torch::Tensor& logits_fake, AdversarialForm form) {
  const auto p_fake = clamped_probability(logits_fake);
  if (form == AdversarialForm::saturating) return torch::log(1.0 - p_fake);
  return -torch::log(p_fake);
}

double TrainSummary::seconds_per_epoch() const {
  if (epochs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : epochs) total += e.seconds;
  return total / static_cast<double>(epochs.size());
}

Trainer::Trainer(TrainConfig config) : config_(std::move(config)) {
  config_.finalize();
  config_.validate();
  if (config_.training.deterministic) torch::set_num_threads(1);
  tokenizer_ = load_tokenizer(config_.tokenizer_source, config_.tokenizer, &config_.tokenizer);
  generator_ = build_generator(config_.generator);
  discriminator_ = build_discriminator(config_.discriminator);
  const auto& t = config_.training;
  opt_g_ = std::make_unique<torch::optim::Adam>(
      generator_->parameters(), torch::optim::AdamOptions(t.lr_g).betas({t.beta1, t.beta2}));
  opt_d_ = std::make_unique<torch::optim::Adam>(
      discriminator_->parameters(), torch::optim::AdamOptions(t.lr_d).betas({t.beta1, t.beta2}));
}

torch::Tensor Trainer::discriminator_logits(const torch::Tensor& images) {
  const auto blocks = tokenizer_->extract(images, {config_.block_ids.back()});
  return discriminator_->forward(pool_tokens(blocks.back()));
}

double Trainer::discriminator_step(const torch::Tensor& batch_x, const torch::Tensor& batch_y,
                                   std::int64_t batch_index) {
  if (batch_x.size(0) == 0 || batch_y.size(0) == 0) throw ShapeError("empty batch");
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = generator_->forward(batch_x).detach();
  }
  opt_d_->zero_grad();
  const auto loss = discriminator_loss(discriminator_logits(batch_y), discriminator_logits(fake));
  const double value = loss.item<double>();
  require_finite_loss(value, "discriminator loss", batch_index);
  loss.backward();
  opt_d_->step();
  return value;
}

LossReport Trainer::generator_step(const torch::Tensor& batch_x, std::int64_t batch_index) {
  if (batch_x.size(0) == 0) throw ShapeError("empty batch");
  RequiresGradGuard freeze_d(*discriminator_, false);
  opt_g_->zero_grad();

  const auto fake = generator_->forward(batch_x);
  std::vector<torch::Tensor> x_blocks;
  {
    torch::NoGradGuard no_grad;
    x_blocks = tokenizer_->extract(batch_x, config_.block_ids);
  }
  const auto yhat_blocks = tokenizer_->extract(fake, config_.block_ids);

  LossReport report;
  const auto adversarial =
      generator_adversarial_terms(discriminator_->forward(pool_tokens(yhat_blocks.back())), config_.training.adversarial)
          .mean();
  auto loss = adversarial;
  if (config_.loss.lambda != 0.0) {
    const auto sem = semantic_loss_tensor(x_blocks, yhat_blocks, config_.block_ids, config_.loss, &report);
    loss = loss + config_.loss.lambda * sem.to(torch::kFloat64);
  } else {
    // Semantic terms are still logged when they carry no weight.
    LossReport mean;
    const double inv = 1.0 / static_cast<double>(batch_x.size(0));
    std::vector<torch::Tensor> xd, yd;
    for (const auto& b : x_blocks) xd.push_back(b.detach());
    for (const auto& b : yhat_blocks) yd.push_back(b.detach());
    for (std::int64_t i = 0; i < batch_x.size(0); ++i) {
      const auto r = semantic_loss(to_feature_stack(xd, config_.block_ids, i),
                                   to_feature_stack(yd, config_.block_ids, i), config_.loss);
      mean.l_self += r.l_self * inv;
      mean.l_cross += r.l_cross * inv;
    }
    report.l_self = mean.l_self;
    report.l_cross = mean.l_cross;
    report.l_sem = blend_semantic(config_.loss.alpha, mean.l_self, mean.l_cross);
  }
  report.l_g = loss.item<double>();
  require_finite_loss(report.l_g, "generator loss", batch_index);
  loss.backward();
  opt_g_->step();
  return report;
}

EpochRecord Trainer::run_epoch(const UnpairedDataset& dataset, int epoch,
                               const std::function<void(const StepRecord&)>& on_step) {
  const auto& xs = dataset.x.images;
  const auto& ys = dataset.y.images;
  if (xs.empty() || ys.empty()) throw IoError("training needs at least one image per domain");
  generator_->train();
  discriminator_->train();

  std::mt19937_64 rng_x(config_.training.seed * 1000003ULL + static_cast<std::uint64_t>(epoch) * 2 + 0);
  std::mt19937_64 rng_y(config_.training.seed * 1000003ULL + static_cast<std::uint64_t>(epoch) * 2 + 1);
  const auto order_x = shuffled(xs.size(), rng_x);
  const auto order_y = shuffled(ys.size(), rng_y);
  const auto batch = static_cast<std::size_t>(config_.training.batch_size);
  const std::size_t batches = (std::max(xs.size(), ys.size()) + batch - 1) / batch;

  EpochRecord rec;
  rec.epoch = epoch;
  const auto t0 = Clock::now();
  for (std::size_t k = 0; k < batches; ++k) {
    const auto ts = Clock::now();
    std::vector<const Image*> bx, by;
    for (std::size_t i = 0; i < batch; ++i) {
      bx.push_back(&xs[order_x[(k * batch + i) % xs.size()]]);
      by.push_back(&ys[order_y[(k * batch + i) % ys.size()]]);
    }
    const auto tx = images_to_batch(bx);
    const auto ty = images_to_batch(by);
    const auto index = static_cast<std::int64_t>(k);
    StepRecord step;
    step.losses.l_d = discriminator_step(tx, ty, index);
    const auto g = generator_step(tx, index);
    step.losses.l_g = g.l_g;
    step.losses.l_self = g.l_self;
    step.losses.l_cross = g.l_cross;
    step.losses.l_sem = g.l_sem;
    step.step = step_++;
    step.epoch = epoch;
    step.seconds = seconds_since(ts);

    rec.mean.l_d += step.losses.l_d;
    rec.mean.l_g += step.losses.l_g;
    rec.mean.l_self += step.losses.l_self;
    rec.mean.l_cross += step.losses.l_cross;
    rec.mean.l_sem += step.losses.l_sem;
    if (on_step) on_step(step);
  }
  const double inv = 1.0 / static_cast<double>(batches);
  rec.mean.l_d *= inv;
  rec.mean.l_g *= inv;
  rec.mean.l_self *= inv;
  rec.mean.l_cross *= inv;
  rec.mean.l_sem *= inv;
  rec.steps = static_cast<std::int64_t>(batches);
  rec.seconds = seconds_since(t0);
  return rec;
}

TrainSummary Trainer::train(const UnpairedDataset& dataset, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto metrics_path = out_dir / "metrics.jsonl";
  const auto epochs_path = out_dir / "epochs.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  std::ofstream epochs(epochs_path, std::ios::trunc);
  if (!metrics || !epochs) throw IoError("cannot write metrics logs in " + out_dir.string());

  TrainSummary summary;
  const auto t0 = Clock::now();
  for (int e = 0; e < config_.training.epochs; ++e) {
    auto rec = run_epoch(dataset, e, [&](const StepRecord& s) { metrics << step_record_json(s) << '\n'; });
    metrics.flush();
    epochs << epoch_record_json(rec) << '\n';
    epochs.flush();
    summary.epochs.push_back(rec);
    const int every = config_.training.checkpoint_every;
    if (every > 0 && (e + 1) % every == 0 && e + 1 < config_.training.epochs) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch_%03d.s2xw", e + 1);
      save_checkpoint(out_dir / name);
    }
  }
  if (!metrics || !epochs) throw IoError("failed writing metrics logs in " + out_dir.string());
  summary.checkpoint = out_dir / "checkpoint.s2xw";
  save_checkpoint(summary.checkpoint);
  summary.checkpoint_checksum = file_checksum(summary.checkpoint);
  summary.total_seconds = seconds_since(t0);
  return summary;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  WeightFile file;
  file.kind = WeightKind::checkpoint;
  file.depth = static_cast<std::uint32_t>(config_.tokenizer.depth);
  file.dim = static_cast<std::uint32_t>(config_.tokenizer.dim);
  file.patch_size = static_cast<std::uint32_t>(config_.tokenizer.patch_size);
  file.step = static_cast<std::uint64_t>(step_);
  auto meta = config_to_json(config_);
  meta.erase("out");
  file.metadata_json = meta.dump();
  const std::vector<std::pair<const torch::nn::Module*, std::string>> parts = {
      {generator_.get(), "generator."}, {discriminator_.get(), "discriminator."}, {tokenizer_.get(), "tokenizer."}};
  for (const auto& [module, prefix] : parts) {
    auto tensors = export_parameters(*module, prefix);
    file.tensors.insert(file.tensors.end(), std::make_move_iterator(tensors.begin()),
                        std::make_move_iterator(tensors.end()));
  }
  write_weights(path, file);
}

TranslationModel load_checkpoint(const std::filesystem::path& path) {
  const auto file = read_weights(path);
  if (file.kind != WeightKind::checkpoint) throw IoError(path.string() + " is not a translation checkpoint");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(file.metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  TranslationModel m;
  m.config = config_from_json(meta);
  if (static_cast<int>(file.dim) != m.config.tokenizer.dim || static_cast<int>(file.depth) != m.config.tokenizer.depth ||
      static_cast<int>(file.patch_size) != m.config.tokenizer.patch_size) {
    throw ShapeError(path.string() + ": header disagrees with the embedded config");
  }
  m.tokenizer = Tokenizer(m.config.tokenizer);
  import_parameters(*m.tokenizer, file.tensors, "tokenizer.");
  m.tokenizer->freeze();
  m.generator = build_generator(m.config.generator);
  import_parameters(*m.generator, file.tensors, "generator.");
  m.generator->eval();
  m.discriminator = build_discriminator(m.config.discriminator);
  import_parameters(*m.discriminator, file.tensors, "discriminator.");
  m.discriminator->eval();
  m.step = static_cast<std::int64_t>(file.step);
  return m;
}

LatencyStats latency_stats(std::vector<double> per_image_ms) {
  LatencyStats s;
  s.per_image_ms = per_image_ms;
  if (per_image_ms.empty()) return s;
  std::sort(per_image_ms.begin(), per_image_ms.end());
  const auto n = per_image_ms.size();
  s.mean_ms = std::accumulate(per_image_ms.begin(), per_image_ms.end(), 0.0) / static_cast<double>(n);
  s.median_ms = n % 2 ? per_image_ms[n / 2] : 0.5 * (per_image_ms[n / 2 - 1] + per_image_ms[n / 2]);
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = per_image_ms[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

TranslateResult translate(Generator& generator, const std::vector<Image>& images) {
  TranslateResult r;
  std::vector<double> ms;
  for (const auto& img : images) {
    const auto t0 = Clock::now();
    r.images.push_back(generate(generator, img));
    ms.push_back(1000.0 * seconds_since(t0));
  }
  r.latency = latency_stats(std::move(ms));
  return r;
}

namespace {

nlohmann::ordered_json loss_fields(const LossReport& l) {
  return {{"l_d", l.l_d}, {"l_g", l.l_g}, {"l_self", l.l_self}, {"l_cross", l.l_cross}, {"l_sem", l.l_sem}};
}

}  // namespace

std::string step_record_json(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  const auto losses = loss_fields(r.losses);
  for (const auto& [k, v] : losses.items()) j[k] = v;
  j["seconds"] = r.seconds;
  return j.dump();
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["steps"] = r.steps;
  const auto losses = loss_fields(r.mean);
  for (const auto& [k, v] : losses.items()) j[k] = v;
  j["seconds"] = r.seconds;
  return j.dump();
}

}  // namespace sim2xray
