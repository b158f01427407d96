#include "support/torch_doctest.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "sim2xray/config.hpp"
#include "sim2xray/errors.hpp"
#include "sim2xray/evaluation.hpp"
#include "sim2xray/semantic_autograd.hpp"
#include "sim2xray/torch_bridge.hpp"
#include "sim2xray/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace sim2xray;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

nlohmann::json without_seconds(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  j.erase("seconds");
  return j;
}

struct Fixture {
  TempDir dir{"train"};
  UnpairedDataset data;
  Fixture() {
    write_tiny_corpus(dir / "corpus");
    data = load_unpaired(dir / "corpus" / "x", dir / "corpus" / "y", 64, 1);
  }
  TrainConfig config(const nlohmann::json& patch = nlohmann::json::object()) {
    auto j = tiny_config_json(dir / "corpus", dir / "run");
    j.merge_patch(patch);
    return config_from_json(j);
  }
  torch::Tensor batch_x(std::size_t n = 2) {
    std::vector<const Image*> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(&data.x.images[i]);
    return images_to_batch(v);
  }
  torch::Tensor batch_y(std::size_t n = 2) {
    std::vector<const Image*> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(&data.y.images[i]);
    return images_to_batch(v);
  }
};

}  // namespace

TEST_CASE("discriminator loss analytic values") {
  const auto zero = torch::zeros({3});
  CHECK(discriminator_loss(zero, zero).item<double>() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // One sample, hand binary cross-entropy.
  const double zr = 1.3, zf = -0.4;
  const double hand = -std::log(sigmoid(zr)) - std::log(1.0 - sigmoid(zf));
  const auto l = discriminator_loss(torch::tensor({zr}, torch::kFloat64), torch::tensor({zf}, torch::kFloat64));
  CHECK(l.item<double>() == doctest::Approx(hand).epsilon(1e-12));

  // A perfect discriminator is clamped to a finite loss near 0.
  const auto perfect = discriminator_loss(torch::full({2}, 60.0), torch::full({2}, -60.0)).item<double>();
  CHECK(std::isfinite(perfect));
  CHECK(perfect < 1e-6);
  // A perfectly wrong one is clamped away from infinity.
  CHECK(std::isfinite(discriminator_loss(torch::full({2}, -60.0), torch::full({2}, 60.0)).item<double>()));
}

TEST_CASE("generator adversarial terms at sigmoid(0)") {
  const auto zero = torch::zeros({4});
  const auto sat = generator_adversarial_terms(zero, AdversarialForm::saturating);
  const auto ns = generator_adversarial_terms(zero, AdversarialForm::non_saturating);
  for (int i = 0; i < 4; ++i) {
    CHECK(sat[i].item<double>() == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK(ns[i].item<double>() == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
  }
}

TEST_CASE("latency statistics") {
  const auto s = latency_stats({4.0, 1.0, 100.0, 3.0, 2.0});
  CHECK(s.mean_ms == doctest::Approx(22.0));
  CHECK(s.median_ms == 3.0);
  CHECK(s.p95_ms == 100.0);
  CHECK(s.per_image_ms.size() == 5);
  const auto even = latency_stats({1.0, 2.0, 3.0, 4.0});
  CHECK(even.median_ms == 2.5);
  CHECK(latency_stats({}).mean_ms == 0.0);
}

TEST_CASE("semantic loss tensor matches the oracle and its gradient") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<torch::Tensor> xb, yb;
  for (int k = 0; k < 2; ++k) {
    xb.push_back(torch::randn({2, 5, 4}, torch::kFloat64));
    yb.push_back(torch::randn({2, 5, 4}, torch::kFloat64).set_requires_grad(true));
  }
  LossConfig cfg;
  LossReport report;
  auto loss = semantic_loss_tensor(xb, yb, {1, 2}, cfg, &report);
  // Oracle: batch mean of the blended per-block distances.
  double expect = 0.0;
  for (int b = 0; b < 2; ++b) {
    double s = 0.0, c = 0.0;
    for (int k = 0; k < 2; ++k) {
      const auto xs = oracle::to_rows(to_feature_stack(xb, {1, 2}, b).sets[static_cast<std::size_t>(k)].tokens);
      const auto ys = oracle::to_rows(
          to_feature_stack({yb[0].detach(), yb[1].detach()}, {1, 2}, b).sets[static_cast<std::size_t>(k)].tokens);
      s += oracle::self_block_distance(xs, ys) / 2.0;
      c += oracle::cross_block_distance(xs, ys) / 2.0;
    }
    expect += (0.5 * s + 0.5 * c) / 2.0;
  }
  CHECK(loss.item<double>() == doctest::Approx(expect).epsilon(1e-9));
  CHECK(report.l_sem == doctest::Approx(expect).epsilon(1e-9));

  loss.backward();
  const double h = 1e-5;
  for (int k = 0; k < 2; ++k) {
    auto g = yb[static_cast<std::size_t>(k)].grad();
    for (int trial = 0; trial < 5; ++trial) {
      const int b = trial % 2, i = trial % 5, j = (trial * 3) % 4;
      auto plus = yb, minus = yb;
      for (auto& t : plus) t = t.detach().clone();
      for (auto& t : minus) t = t.detach().clone();
      plus[static_cast<std::size_t>(k)][b][i][j] += h;
      minus[static_cast<std::size_t>(k)][b][i][j] -= h;
      const double fd = (semantic_loss_tensor(xb, plus, {1, 2}, cfg).item<double>() -
                         semantic_loss_tensor(xb, minus, {1, 2}, cfg).item<double>()) /
                        (2 * h);
      CHECK(g[b][i][j].item<double>() == doctest::Approx(fd).epsilon(1e-5).scale(1e-8));
    }
  }
  CHECK_THROWS_AS(semantic_loss_tensor(xb, {yb[0]}, {1, 2}, cfg), ShapeError);
}

TEST_CASE("discriminator step: zero-init anchor and isolation") {
  Fixture f;
  auto t = Trainer(f.config({{"discriminator", {{"zero_init", true}}}}));
  const auto g0 = parameter_checksum(*t.generator());
  const auto k0 = parameter_checksum(*t.tokenizer());
  const auto d0 = parameter_checksum(*t.discriminator());
  const double ld = t.discriminator_step(f.batch_x(), f.batch_y());
  CHECK(std::abs(ld - 2.0 * std::log(2.0)) < 1e-6);
  CHECK(parameter_checksum(*t.generator()) == g0);
  CHECK(parameter_checksum(*t.tokenizer()) == k0);
  CHECK(parameter_checksum(*t.discriminator()) != d0);
}

TEST_CASE("generator step: l_g assembled from oracle semantic loss and log(0.5)") {
  Fixture f;
  auto t = Trainer(f.config({{"discriminator", {{"zero_init", true}}}, {"loss", {{"lambda", 8.0}}}}));
  const auto bx = f.batch_x();
  const auto ids = t.config().block_ids;
  double oracle_sem = 0.0;
  {
    torch::NoGradGuard no_grad;
    const auto xs = t.tokenizer()->extract(bx, ids);
    const auto ys = t.tokenizer()->extract(t.generator()->forward(bx), ids);
    for (int b = 0; b < 2; ++b) {
      const auto sx = to_feature_stack(xs, ids, b);
      const auto sy = to_feature_stack(ys, ids, b);
      double s = 0.0, c = 0.0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto a = oracle::to_rows(sx.sets[k].tokens);
        const auto y = oracle::to_rows(sy.sets[k].tokens);
        s += oracle::self_block_distance(a, y) / static_cast<double>(ids.size());
        c += oracle::cross_block_distance(a, y) / static_cast<double>(ids.size());
      }
      oracle_sem += (0.5 * s + 0.5 * c) / 2.0;
    }
  }
  const auto d0 = parameter_checksum(*t.discriminator());
  const auto k0 = parameter_checksum(*t.tokenizer());
  const auto g0 = parameter_checksum(*t.generator());
  const auto r = t.generator_step(bx);
  CHECK(r.l_sem == doctest::Approx(oracle_sem).epsilon(1e-5));
  CHECK(r.l_g == doctest::Approx(std::log(0.5) + 8.0 * oracle_sem).epsilon(1e-5));
  CHECK(std::abs(r.l_sem - blend_semantic(0.5, r.l_self, r.l_cross)) < 1e-12);
  CHECK(parameter_checksum(*t.discriminator()) == d0);
  CHECK(parameter_checksum(*t.tokenizer()) == k0);
  CHECK(parameter_checksum(*t.generator()) != g0);
  for (const auto& p : t.discriminator()->parameters()) CHECK(p.requires_grad());
}

TEST_CASE("lambda 0 leaves the pure adversarial term") {
  Fixture f;
  auto t = Trainer(f.config({{"discriminator", {{"zero_init", true}}}, {"training", {{"ablation", "gan_only"}}}}));
  CHECK(t.config().loss.lambda == 0.0);
  const auto r = t.generator_step(f.batch_x());
  CHECK(std::abs(r.l_g - std::log(0.5)) < 1e-6);
  CHECK(r.l_sem > 0.0);  // still logged
}

TEST_CASE("both adversarial forms move the generator") {
  Fixture f;
  for (const char* form : {"saturating", "non_saturating"}) {
    auto t = Trainer(f.config({{"training", {{"adversarial", form}, {"ablation", "gan_only"}}}}));
    const auto g0 = parameter_checksum(*t.generator());
    t.generator_step(f.batch_x());
    CHECK_MESSAGE(parameter_checksum(*t.generator()) != g0, form);
  }
}

TEST_CASE("non-finite loss names the batch") {
  Fixture f;
  auto t = Trainer(f.config());
  {
    torch::NoGradGuard no_grad;
    t.discriminator()->parameters().back().fill_(std::nan(""));
  }
  try {
    t.discriminator_step(f.batch_x(), f.batch_y(), 3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("batch 3") != std::string::npos);
  }
}

TEST_CASE("training smoke: one epoch writes logs and a loadable checkpoint") {
  Fixture f;
  auto cfg = f.config();
  Trainer t(cfg);
  const auto k0 = parameter_checksum(*t.tokenizer());
  const auto summary = t.train(f.data, f.dir / "run");
  CHECK(parameter_checksum(*t.tokenizer()) == k0);
  REQUIRE(std::filesystem::exists(summary.checkpoint));
  const auto lines = read_lines(f.dir / "run" / "metrics.jsonl");
  REQUIRE(lines.size() == 2);  // 4 images, batch 2
  for (const auto& l : lines) {
    const auto j = nlohmann::json::parse(l);
    for (const char* key : {"step", "epoch", "l_d", "l_g", "l_self", "l_cross", "l_sem", "seconds"}) {
      CHECK_MESSAGE(j.contains(key), key);
    }
    CHECK(std::abs(j["l_sem"].get<double>() -
                   blend_semantic(0.5, j["l_self"].get<double>(), j["l_cross"].get<double>())) < 1e-6);
  }
  CHECK(read_lines(f.dir / "run" / "epochs.jsonl").size() == 1);

  auto m = load_checkpoint(summary.checkpoint);
  CHECK(parameter_checksum(*m.generator) == parameter_checksum(*t.generator()));
  CHECK(parameter_checksum(*m.discriminator) == parameter_checksum(*t.discriminator()));
  CHECK(parameter_checksum(*m.tokenizer) == k0);
  CHECK(m.step == 2);
  CHECK(m.config.block_ids == t.config().block_ids);

  const auto a = translate(m.generator, f.data.x.images);
  const auto b = translate(m.generator, f.data.x.images);
  REQUIRE(a.images.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.images[i].data == b.images[i].data);
  CHECK(a.latency.per_image_ms.size() == 4);
  CHECK(a.latency.p95_ms >= a.latency.median_ms);

  Image rgb(64, 64, 3);
  CHECK_THROWS_AS(translate(m.generator, {rgb}), ShapeError);
}

TEST_CASE("same seed, same epoch-0 records") {
  Fixture f;
  std::vector<std::vector<nlohmann::json>> runs;
  for (const char* name : {"a", "b"}) {
    Trainer t(f.config());
    t.train(f.data, f.dir / name);
    std::vector<nlohmann::json> rec;
    for (const auto& l : read_lines(f.dir / name / "metrics.jsonl")) rec.push_back(without_seconds(l));
    runs.push_back(rec);
  }
  CHECK(runs[0] == runs[1]);
  const auto ca = read_file_bytes(f.dir / "a" / "checkpoint.s2xw");
  const auto cb = read_file_bytes(f.dir / "b" / "checkpoint.s2xw");
  CHECK(ca == cb);
}

TEST_CASE("ablation algebra") {
  Fixture f;
  auto run = [&](const nlohmann::json& patch) {
    Trainer t(f.config(patch));
    std::vector<StepRecord> steps;
    t.run_epoch(f.data, 0, [&](const StepRecord& s) { steps.push_back(s); });
    return steps;
  };
  const auto no_cross = run({{"training", {{"ablation", "no_cross"}}}});
  const auto alpha1 = run({{"loss", {{"alpha", 1.0}}}});
  const auto no_self = run({{"training", {{"ablation", "no_self"}}}});
  const auto alpha0 = run({{"loss", {{"alpha", 0.0}}}});
  REQUIRE(no_cross.size() == alpha1.size());
  for (std::size_t i = 0; i < no_cross.size(); ++i) {
    CHECK(no_cross[i].losses.l_sem == alpha1[i].losses.l_sem);
    CHECK(no_cross[i].losses.l_g == alpha1[i].losses.l_g);
    CHECK(no_self[i].losses.l_sem == alpha0[i].losses.l_sem);
    CHECK(no_self[i].losses.l_sem == no_self[i].losses.l_cross);
    CHECK(no_cross[i].losses.l_sem == no_cross[i].losses.l_self);
  }
}

TEST_CASE("empty domain is rejected") {
  Fixture f;
  Trainer t(f.config());
  UnpairedDataset empty = f.data;
  empty.y.images.clear();
  CHECK_THROWS_AS(t.run_epoch(empty, 0), IoError);
}

TEST_CASE("config: ablation mapping and validation") {
  TempDir dir("cfg");
  auto base = tiny_config_json(dir / "c", dir / "o");
  auto with = [&](const nlohmann::json& patch) {
    auto j = base;
    j.merge_patch(patch);
    return config_from_json(j);
  };
  CHECK(with({{"training", {{"ablation", "no_self"}}}}).loss.alpha == 0.0);
  CHECK(with({{"training", {{"ablation", "no_cross"}}}}).loss.alpha == 1.0);
  CHECK(with({{"training", {{"ablation", "gan_only"}}}}).loss.lambda == 0.0);
  CHECK(with(nlohmann::json::object()).loss.alpha == 0.5);
  CHECK(with(nlohmann::json::object()).loss.lambda == 8.0);

  auto key_of = [&](const nlohmann::json& patch) {
    try {
      with(patch);
    } catch (const ConfigError& e) {
      return e.key_path();
    }
    return std::string("<none>");
  };
  CHECK(key_of({{"training", {{"epochz", 3}}}}) == "training.epochz");
  CHECK(key_of({{"bogus", 1}}) == "bogus");
  CHECK(key_of({{"training", {{"lr_g", -1.0}}}}) == "training.lr_g");
  CHECK(key_of({{"training", {{"batch_size", 0}}}}) == "training.batch_size");
  CHECK(key_of({{"training", {{"batch_size", "four"}}}}) == "training.batch_size");
  CHECK(key_of({{"training", {{"ablation", "no_both"}}}}) == "training.ablation");
  CHECK(key_of({{"loss", {{"alpha", 1.5}}}}) == "loss.alpha");
  CHECK(key_of({{"loss", {{"lambda", -1.0}}}}) == "loss.lambda");
  CHECK(key_of({{"tokenizer", {{"block_ids", {2, 1}}}}}) == "tokenizer.block_ids");
  CHECK(key_of({{"tokenizer", {{"block_ids", {3}}}}}) == "tokenizer.block_ids");
  CHECK(key_of({{"data", {{"image_size", 60}}}}) == "data.image_size");
  CHECK(key_of({{"generator", {{"width", 0}}}}) == "generator.width");
}

TEST_CASE("config: YAML file, relative paths and overrides") {
  TempDir dir("yaml");
  std::filesystem::create_directories(dir / "cfg");
  write_text(dir / "cfg" / "run.yaml",
             "data:\n  dir_x: ../corpus/x\n  dir_y: /abs/y\n  image_size: 64\n"
             "tokenizer:\n  dim: 16\n  depth: 2\n  heads: 2\n"
             "loss:\n  alpha: 0.25\n"
             "training:\n  seed: 5\n  deterministic: true\n"
             "out: runs/a\n");
  const auto c = load_config(dir / "cfg" / "run.yaml");
  CHECK(c.data.dir_x == (dir / "corpus" / "x").lexically_normal().string());
  CHECK(c.data.dir_y == "/abs/y");
  CHECK(c.out_dir == (dir / "cfg" / "runs" / "a").lexically_normal().string());
  CHECK(c.loss.alpha == 0.25);
  CHECK(c.training.seed == 5);
  CHECK(c.block_ids == std::vector<int>{1, 2});
  CHECK(c.discriminator.input_dim == 16);

  const auto o = load_config(dir / "cfg" / "run.yaml", {{"training", {{"ablation", "no_cross"}, {"seed", 9}}}});
  CHECK(o.loss.alpha == 1.0);
  CHECK(o.training.seed == 9);
  CHECK(o.generator.seed == 9);

  // The JSON echo parses back to the same configuration.
  const auto echo = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
  CHECK(config_to_json(echo).dump() == config_to_json(c).dump());

  write_text(dir / "cfg" / "bad.yaml", "training: [1, 2\n");
  CHECK_THROWS_AS(load_config(dir / "cfg" / "bad.yaml"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "cfg" / "missing.yaml"), IoError);
}

TEST_CASE("evaluation: embeddings and identity sanity") {
  Fixture f;
  Trainer t(f.config());
  t.save_checkpoint(f.dir / "ck.s2xw");
  auto model = load_checkpoint(f.dir / "ck.s2xw");
  TokenizerEmbedder emb(model.tokenizer, model.config.block_ids.back());
  CHECK(emb.dim() == 16);

  const auto same = embed_set({f.data.x.images[0], f.data.x.images[0]}, emb);
  CHECK(same.rows() == 2);
  CHECK(same.cols() == 16);
  CHECK(same.row(0) == same.row(1));
  CHECK(embed_set(f.data.y.images, emb).allFinite());
  CHECK_THROWS_AS(embed_set({f.data.x.images[0]}, emb), ShapeError);

  UnpairedDataset yy{f.data.y, f.data.y};
  EvalOptions identity;
  identity.identity = true;
  const auto r = eval_run(model, yy, emb, identity);
  CHECK(r.fid_generated_vs_y < 1e-3);
  CHECK(r.fid_x_vs_y < 1e-3);

  const auto full = eval_run(model, f.data, emb);
  CHECK(full.fid_x_vs_y > 0.0);
  CHECK(full.latency.per_image_ms.size() == 4);
  CHECK(full.param_count == count_parameters(*model.generator));
  const auto j = report_to_json(full);
  for (const char* key : {"fid_generated_vs_y", "fid_x_vs_y", "latency_ms", "param_count"}) CHECK(j.contains(key));

  const auto table = format_table({full});
  CHECK(table.find("Method") != std::string::npos);
  CHECK(table.find("Sim2Xray") != std::string::npos);

  CHECK_THROWS_AS(make_embedder("resnet", model), ConfigError);
  CHECK_THROWS_AS(make_embedder("classifier:" + (f.dir / "none.pt").string(), model), IoError);
  CHECK(make_embedder("tokenizer", model)->dim() == 16);
}
