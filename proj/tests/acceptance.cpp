// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <source dir> <work dir> [--only N,M,...]

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sim2xray/cli_app.hpp"
#include "sim2xray/config.hpp"
#include "sim2xray/data.hpp"
#include "sim2xray/evaluation.hpp"
#include "sim2xray/frechet.hpp"
#include "sim2xray/matching.hpp"
#include "sim2xray/png_io.hpp"
#include "sim2xray/torch_bridge.hpp"
#include "sim2xray/trainer.hpp"
#include "sim2xray/weights_io.hpp"
#include "support/oracles.hpp"

using namespace sim2xray;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;  // 0 = no runtime bound
  bool fatal;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1 ----------------------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  bool transpose_exact = true;
  int cases = 0;
  for (int n = 1; n <= 8; ++n)
    for (int d = 1; d <= 8; ++d)
      for (int c = 0; c < 100; ++c, ++cases) {
        const auto s = oracle::random_tokens(rng, n, d);
        const auto t = oracle::random_tokens(rng, n, d);
        const auto rs = oracle::to_rows(s.tokens), rt = oracle::to_rows(t.tokens);
        const auto self = self_domain_matrix(s);
        const auto [xc, yc] = cross_domain_matrices(s, t);
        const auto o_self = oracle::pair_dots(rs, rs);
        const auto o_xc = oracle::pair_dots(rs, rt);
        const auto o_yc = oracle::pair_dots(rt, rs);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            worst = std::max(worst, std::abs(self.values(i, j) - o_self[i][j]));
            worst = std::max(worst, std::abs(xc.values(i, j) - o_xc[i][j]));
            worst = std::max(worst, std::abs(yc.values(i, j) - o_yc[i][j]));
            if (yc.values(i, j) != xc.values(j, i)) transpose_exact = false;
          }
      }
  return {worst <= 1e-6 && transpose_exact, std::to_string(cases) + " cases, max |diff| " + fmt("%.3g", worst) +
                                                ", transpose law " + (transpose_exact ? "exact" : "violated")};
}

// ---- 2 ----------------------------------------------------------------------

Outcome zero_and_endpoints() {
  std::mt19937_64 rng(202);
  int zero_ok = 0, endpoints_ok = 0;
  double worst_zero = 0.0;
  for (int c = 0; c < 20; ++c) {
    const int n = 1 + static_cast<int>(rng() % 8), d = 1 + static_cast<int>(rng() % 8);
    const auto a = oracle::random_stack(rng, 3, n, d);
    const auto b = oracle::random_stack(rng, 3, n, d);
    LossConfig cfg;
    cfg.alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto same = semantic_loss(a, a, cfg);
    worst_zero = std::max(worst_zero, std::abs(same.l_sem));
    if (same.l_sem == 0.0) ++zero_ok;

    LossConfig one, zero;
    one.alpha = 1.0;
    zero.alpha = 0.0;
    const auto r1 = semantic_loss(a, b, one);
    const auto r0 = semantic_loss(a, b, zero);
    if (r1.l_sem == r1.l_self && r0.l_sem == r0.l_cross) ++endpoints_ok;
  }
  return {zero_ok == 20 && endpoints_ok == 20,
          "zero law " + std::to_string(zero_ok) + "/20 (max |l_sem| " + fmt("%.3g", worst_zero) + "), endpoints " +
              std::to_string(endpoints_ok) + "/20 bitwise"};
}

// ---- 3 ----------------------------------------------------------------------

Outcome invariance_suite() {
  std::mt19937_64 rng(303);
  double worst_scale = 0.0, worst_rot = 0.0;
  for (int c = 0; c < 50; ++c) {
    const int n = 2 + static_cast<int>(rng() % 7), d = 1 + static_cast<int>(rng() % 8);
    const auto x = oracle::random_stack(rng, 2, n, d);
    const auto y = oracle::random_stack(rng, 2, n, d);
    const double base = self_loss(x, y);

    std::uniform_real_distribution<double> scale(0.05, 20.0);
    auto xs = x, ys = y;
    for (auto& s : xs.sets) s.tokens *= scale(rng);
    for (auto& s : ys.sets) s.tokens *= scale(rng);
    worst_scale = std::max(worst_scale, std::abs(self_loss(xs, ys) - base));

    auto xr = x, yr = y;
    for (auto& s : xr.sets) s.tokens = s.tokens * oracle::random_orthogonal(rng, d);
    for (auto& s : yr.sets) s.tokens = s.tokens * oracle::random_orthogonal(rng, d);
    worst_rot = std::max(worst_rot, std::abs(self_loss(xr, yr) - base));
  }
  return {worst_scale <= 1e-6 && worst_rot <= 1e-6,
          "50 cases, max scale drift " + fmt("%.3g", worst_scale) + ", max rotation drift " + fmt("%.3g", worst_rot)};
}

// ---- 4 ----------------------------------------------------------------------

Outcome gradient_check() {
  double worst = 0.0;
  LossConfig cfg;
  cfg.alpha = 0.5;
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(400 + static_cast<std::uint64_t>(seed));
    const auto x = oracle::random_stack(rng, 2, 4, 8);
    const auto y = oracle::random_stack(rng, 2, 4, 8);
    const auto analytic = semantic_loss_gradient(x, y, cfg).d_sem;
    const auto numeric = oracle::central_differences(
        y,
        [&](const FeatureStack& yy) {
          double s = 0.0, c = 0.0;
          for (std::size_t k = 0; k < yy.sets.size(); ++k) {
            const auto a = oracle::to_rows(x.sets[k].tokens), b = oracle::to_rows(yy.sets[k].tokens);
            s += oracle::self_block_distance(a, b);
            c += oracle::cross_block_distance(a, b);
          }
          const double nblocks = static_cast<double>(yy.sets.size());
          return 0.5 * s / nblocks + 0.5 * c / nblocks;
        },
        1e-4);
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
  }
  return {worst < 1e-3, "10 seeds, n=4, d=8, max relative error " + fmt("%.3g", worst)};
}

// ---- shared training fixtures -------------------------------------------------

struct Workspace {
  fs::path source;
  fs::path work;
  fs::path corpus() const { return work / "corpus"; }
  fs::path desk_config() const { return source / "configs" / "desk.yaml"; }

  nlohmann::json overrides(std::uint64_t seed, const std::string& ablation, const fs::path& out) const {
    return {{"data", {{"dir_x", (corpus() / "x").string()}, {"dir_y", (corpus() / "y").string()}}},
            {"training", {{"seed", seed}, {"ablation", ablation}}},
            {"out", out.string()}};
  }
};

Workspace g_ws;

UnpairedDataset& corpus_data() {
  static UnpairedDataset data = [] {
    if (!fs::exists(g_ws.corpus() / "manifest.json")) {
      SynthOptions o;
      o.seed = 1;
      o.n_x = 64;
      o.n_y = 64;
      o.image_size = 64;
      synth_corpus(o, g_ws.corpus());
    }
    return load_unpaired(g_ws.corpus() / "x", g_ws.corpus() / "y", 64, 1);
  }();
  return data;
}

// ---- 5 ----------------------------------------------------------------------

Outcome gan_anchors() {
  auto cfg = load_config(g_ws.desk_config(), g_ws.overrides(0, "full", g_ws.work / "anchors"));
  cfg.discriminator.zero_init = true;
  Trainer t(cfg);
  auto& data = corpus_data();
  std::vector<const Image*> bx, by;
  for (int i = 0; i < 4; ++i) {
    bx.push_back(&data.x.images[static_cast<std::size_t>(i)]);
    by.push_back(&data.y.images[static_cast<std::size_t>(i)]);
  }
  const auto tx = images_to_batch(bx), ty = images_to_batch(by);

  torch::Tensor terms;
  {
    torch::NoGradGuard no_grad;
    terms = generator_adversarial_terms(t.discriminator_logits(t.generator()->forward(tx)), AdversarialForm::saturating);
  }
  double worst_term = 0.0;
  for (std::int64_t i = 0; i < terms.size(0); ++i) {
    worst_term = std::max(worst_term, std::abs(terms[i].item<double>() - std::log(0.5)));
  }
  const double ld = t.discriminator_step(tx, ty);
  const double ld_err = std::abs(ld - 2.0 * std::log(2.0));
  return {ld_err <= 1e-6 && worst_term <= 1e-6,
          "l_d = " + fmt("%.9f", ld) + " (|err| " + fmt("%.2g", ld_err) + "), max |term - log 0.5| " +
              fmt("%.2g", worst_term)};
}

// ---- 6 ----------------------------------------------------------------------

Outcome step_isolation() {
  auto cfg = load_config(g_ws.desk_config(), g_ws.overrides(0, "full", g_ws.work / "isolation"));
  Trainer t(cfg);
  auto& data = corpus_data();
  std::vector<const Image*> bx, by;
  for (int i = 0; i < 4; ++i) {
    bx.push_back(&data.x.images[static_cast<std::size_t>(i)]);
    by.push_back(&data.y.images[static_cast<std::size_t>(i)]);
  }
  const auto tx = images_to_batch(bx), ty = images_to_batch(by);
  const auto sum = [&] {
    return std::array<std::uint64_t, 3>{parameter_checksum(*t.generator()), parameter_checksum(*t.discriminator()),
                                        parameter_checksum(*t.tokenizer())};
  };
  const auto s0 = sum();
  t.discriminator_step(tx, ty);
  const auto s1 = sum();
  t.generator_step(tx);
  const auto s2 = sum();
  t.run_epoch(data, 0);
  const auto s3 = sum();
  const bool d_ok = s1[0] == s0[0] && s1[2] == s0[2] && s1[1] != s0[1];
  const bool g_ok = s2[1] == s1[1] && s2[2] == s1[2] && s2[0] != s1[0];
  const bool e_ok = s3[2] == s0[2];
  return {d_ok && g_ok && e_ok, std::string("D step isolates G/tokenizer: ") + (d_ok ? "yes" : "no") +
                                    ", G step isolates D/tokenizer: " + (g_ok ? "yes" : "no") +
                                    ", tokenizer unchanged after epoch: " + (e_ok ? "yes" : "no")};
}

// ---- 7 ----------------------------------------------------------------------

Outcome frechet_metric() {
  std::mt19937_64 rng(707);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd samples(400, 6);
  for (Eigen::Index i = 0; i < samples.size(); ++i) samples.data()[i] = g(rng);
  samples.col(1) += 0.5 * samples.col(0);
  const auto a = compute_stats(samples);
  const double self = frechet_distance(a, a);

  FeatureStats b = a;
  Eigen::VectorXd shift(6);
  shift << 0.3, -1.2, 0.05, 2.0, -0.7, 0.9;
  b.mean += shift;
  const double shifted = frechet_distance(a, b);
  const double shift_err = std::abs(shifted - shift.squaredNorm());

  FeatureStats p, q;
  p.mean = Eigen::VectorXd::Constant(1, 0.0);
  p.cov = Eigen::MatrixXd::Constant(1, 1, 1.0);
  p.count = 10;
  q.mean = Eigen::VectorXd::Constant(1, 1.0);
  q.cov = Eigen::MatrixXd::Constant(1, 1, 4.0);
  q.count = 10;
  const double one_d = frechet_distance(p, q);
  const double closed = (1.0 - 2.0) * (1.0 - 2.0) + (0.0 - 1.0) * (0.0 - 1.0);
  const double one_d_err = std::abs(one_d - closed);
  return {self < 1e-3 && shift_err <= 1e-3 && one_d_err <= 1e-6,
          "FD(a,a) " + fmt("%.3g", self) + ", shift |err| " + fmt("%.3g", shift_err) + ", 1-D " + fmt("%.9f", one_d) +
              " vs " + fmt("%.1f", closed)};
}

// ---- 8 / 9 ----------------------------------------------------------------------

struct RunScore {
  double fid_translated = 0.0;
  double fid_raw = 0.0;
  double first_l_sem = 0.0;
  double last_l_sem = 0.0;
};

RunScore train_and_score(std::uint64_t seed, const std::string& ablation) {
  const auto out = g_ws.work / "runs" / ablation / ("seed_" + std::to_string(seed));
  const auto cfg = load_config(g_ws.desk_config(), g_ws.overrides(seed, ablation, out));
  auto& data = corpus_data();
  Trainer t(cfg);
  const auto summary = t.train(data, out);
  auto model = load_checkpoint(summary.checkpoint);
  TokenizerEmbedder embedder(model.tokenizer, model.config.block_ids.back());
  const auto report = eval_run(model, data, embedder);
  return {report.fid_generated_vs_y, report.fid_x_vs_y, summary.epochs.front().mean.l_sem,
          summary.epochs.back().mean.l_sem};
}

std::map<std::string, std::vector<RunScore>>& scores() {
  static std::map<std::string, std::vector<RunScore>> s;
  return s;
}

const std::vector<RunScore>& mode_scores(const std::string& mode) {
  auto& s = scores();
  if (!s.count(mode)) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) s[mode].push_back(train_and_score(seed, mode));
  }
  return s[mode];
}

Outcome end_to_end() {
  const auto& runs = mode_scores("full");
  int improved = 0, descended = 0;
  std::ostringstream os;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const double ratio = r.fid_translated / r.fid_raw;
    if (ratio <= 0.7) ++improved;
    if (r.first_l_sem > r.last_l_sem) ++descended;
    os << (i ? "; " : "") << "seed " << i << ": " << fmt("%.4f", r.fid_translated) << " vs raw "
       << fmt("%.4f", r.fid_raw) << " (" << fmt("%.1f", 100.0 * (1.0 - ratio)) << "% lower)";
  }
  os << "; l_sem descent " << descended << "/3";
  return {improved >= 2, std::to_string(improved) + "/3 seeds at least 30% lower: " + os.str()};
}

Outcome ablation_direction() {
  auto mean_fid = [](const std::vector<RunScore>& runs) {
    double s = 0.0;
    for (const auto& r : runs) s += r.fid_translated;
    return s / static_cast<double>(runs.size());
  };
  const double full = mean_fid(mode_scores("full"));
  const double no_self = mean_fid(mode_scores("no_self"));
  const double no_cross = mean_fid(mode_scores("no_cross"));
  const bool ok = full <= no_self * 1.1 && full <= no_cross * 1.1;
  return {ok, "mean desk-FID full " + fmt("%.4f", full) + ", w/o self-domain " + fmt("%.4f", no_self) +
                  ", w/o cross-domain " + fmt("%.4f", no_cross)};
}

// ---- 10 ----------------------------------------------------------------------

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::vector<std::string> full = {"sim2xray"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::vector<nlohmann::json> epoch0_records(const fs::path& metrics) {
  std::ifstream in(metrics);
  std::vector<nlohmann::json> out;
  for (std::string line; std::getline(in, line);) {
    auto j = nlohmann::json::parse(line);
    if (j["epoch"] != 0) continue;
    j.erase("seconds");
    out.push_back(j);
  }
  return out;
}

Outcome determinism() {
  corpus_data();
  std::vector<std::vector<nlohmann::json>> logs;
  std::vector<std::uint64_t> sums;
  for (const char* name : {"det_a", "det_b"}) {
    const auto out = g_ws.work / name;
    std::string err;
    const int code = cli({"train", "--config", g_ws.desk_config().string(), "--seed", "0", "--data-x",
                          (g_ws.corpus() / "x").string(), "--data-y", (g_ws.corpus() / "y").string(), "--out",
                          out.string()},
                         &err);
    if (code != 0) return {false, std::string("train exited ") + std::to_string(code) + ": " + err};
    logs.push_back(epoch0_records(out / "metrics.jsonl"));
    const auto bytes = read_file_bytes(out / "checkpoint.s2xw");
    sums.push_back(fnv1a(bytes.data(), bytes.size()));
  }
  const bool same_log = !logs[0].empty() && logs[0] == logs[1];
  const bool same_ck = sums[0] == sums[1];
  return {same_log && same_ck, std::to_string(logs[0].size()) + " epoch-0 records " +
                                   (same_log ? "identical" : "differ") + ", checkpoints " + hex64(sums[0]) + " / " +
                                   hex64(sums[1])};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <source dir> <work dir> [--only N,M,...]\n";
    return 2;
  }
  g_ws.source = argv[1];
  g_ws.work = argv[2];
  std::set<int> only;
  if (argc >= 5 && std::string(argv[3]) == "--only") {
    std::stringstream ss(argv[4]);
    for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
  }
  fs::remove_all(g_ws.work / "runs");
  fs::remove_all(g_ws.work / "det_a");
  fs::remove_all(g_ws.work / "det_b");
  fs::create_directories(g_ws.work);

  const std::vector<Criterion> criteria = {
      {1, "matching matrices equal the double-loop oracle", 5, true, oracle_equivalence},
      {2, "loss zero law and alpha endpoints", 1, true, zero_and_endpoints},
      {3, "scale and orthogonal invariance of l_self", 5, true, invariance_suite},
      {4, "analytic gradient vs central differences", 10, true, gradient_check},
      {5, "GAN losses at sigmoid(0)", 1, true, gan_anchors},
      {6, "step isolation", 30, true, step_isolation},
      {7, "Frechet distance closed forms", 5, true, frechet_metric},
      {8, "end-to-end desk-FID improvement", 900, true, end_to_end},
      {9, "ablation ordering (best effort, non-fatal)", 0, false, ablation_direction},
      {10, "training determinism", 300, true, determinism},
  };

  int fatal_failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    std::string detail = o.detail;
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      pass = false;
      detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
    }
    if (!pass && c.fatal) ++fatal_failures;
    std::cout << (pass ? "PASS" : (c.fatal ? "FAIL" : "FAIL (non-fatal)")) << "  [" << c.id << "] " << c.name << " -- "
              << detail << " (" << fmt("%.2f", secs) << " s)" << std::endl;
  }
  std::cout << (fatal_failures == 0 ? "acceptance: all criteria passed" : "acceptance: failures") << std::endl;
  return fatal_failures == 0 ? 0 : 1;
}
