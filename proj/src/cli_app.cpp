#include "sim2xray/cli_app.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sim2xray/config.hpp"
#include "sim2xray/data.hpp"
#include "sim2xray/errors.hpp"
#include "sim2xray/evaluation.hpp"
#include "sim2xray/png_io.hpp"
#include "sim2xray/torch_bridge.hpp"
#include "sim2xray/trainer.hpp"
#include "sim2xray/weights_io.hpp"

#ifndef SIM2XRAY_VERSION
#define SIM2XRAY_VERSION "0.0.0"
#endif

namespace sim2xray {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const char* version_string() { return SIM2XRAY_VERSION; }

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

std::string command_line(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

struct TrainOverrides {
  std::string ablation;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string out;
  std::string data_x;
  std::string data_y;

  nlohmann::json to_patch() const {
    nlohmann::json j = nlohmann::json::object();
    if (!ablation.empty()) j["training"]["ablation"] = ablation;
    if (seed) j["training"]["seed"] = *seed;
    if (epochs) j["training"]["epochs"] = *epochs;
    if (!out.empty()) j["out"] = absolute(out);
    if (!data_x.empty()) j["data"]["dir_x"] = absolute(data_x);
    if (!data_y.empty()) j["data"]["dir_y"] = absolute(data_y);
    return j;
  }
};

struct TrainOutcome {
  TrainConfig config;
  TrainSummary summary;
  fs::path manifest;
};

TrainOutcome run_training(const std::string& config_path, const nlohmann::json& patch, const std::string& argv_text,
                          std::ostream& out) {
  TrainOutcome r;
  r.config = load_config(config_path, patch);
  const auto& c = r.config;
  if (c.data.dir_x.empty() || c.data.dir_y.empty()) {
    throw ConfigError("data", "dir_x and dir_y are required");
  }
  for (const auto& dir : {c.data.dir_x, c.data.dir_y}) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir);
  }
  const fs::path run_dir = c.out_dir;
  fs::create_directories(run_dir);

  ojson manifest;
  manifest["version"] = version_string();
  manifest["command"] = argv_text;
  manifest["config_file"] = absolute(config_path);
  manifest["overrides"] = patch;
  manifest["seed"] = c.training.seed;
  manifest["started_at"] = utc_now();
  manifest["config"] = config_to_json(c);
  manifest["outputs"] = {{"run_dir", absolute(run_dir.string())},
                         {"metrics", absolute((run_dir / "metrics.jsonl").string())},
                         {"epochs", absolute((run_dir / "epochs.jsonl").string())},
                         {"checkpoint", absolute((run_dir / "checkpoint.s2xw").string())},
                         {"summary", absolute((run_dir / "summary.json").string())}};
  r.manifest = run_dir / "manifest.json";
  write_text_atomic(r.manifest, manifest.dump(2) + "\n");

  std::vector<std::string> warnings;
  const auto dataset = load_unpaired(c.data.dir_x, c.data.dir_y, c.data.image_size, c.data.channels, &warnings);
  for (const auto& w : warnings) out << "warning: " << w << '\n';

  Trainer trainer(c);
  r.summary = trainer.train(dataset, run_dir);

  ojson summary;
  summary["finished_at"] = utc_now();
  summary["steps"] = trainer.step();
  summary["seconds_total"] = r.summary.total_seconds;
  summary["seconds_per_epoch"] = r.summary.seconds_per_epoch();
  summary["checkpoint"] = absolute(r.summary.checkpoint.string());
  summary["checkpoint_checksum"] = hex64(r.summary.checkpoint_checksum);
  summary["trainable_parameters"] = {{"generator", count_parameters(*trainer.generator())},
                                     {"discriminator", count_parameters(*trainer.discriminator())}};
  const auto& last = r.summary.epochs.back().mean;
  summary["final_epoch"] = {{"l_d", last.l_d}, {"l_g", last.l_g}, {"l_self", last.l_self},
                            {"l_cross", last.l_cross}, {"l_sem", last.l_sem}};
  write_text_atomic(run_dir / "summary.json", summary.dump(2) + "\n");
  return r;
}

std::optional<double> seconds_per_epoch_near(const fs::path& checkpoint) {
  const auto path = checkpoint.parent_path() / "summary.json";
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(in);
    return j.at("seconds_per_epoch").get<double>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

EvalReport evaluate_checkpoint(const fs::path& checkpoint, const std::string& dir_x, const std::string& dir_y,
                               const std::string& embedder_spec, bool identity, const std::string& method) {
  auto model = load_checkpoint(checkpoint);
  const auto dataset = load_unpaired(dir_x, dir_y, model.config.data.image_size, model.config.data.channels);
  auto embedder = make_embedder(embedder_spec, model);
  EvalOptions opts;
  opts.identity = identity;
  opts.method = method;
  auto report = eval_run(model, dataset, *embedder, opts);
  report.seconds_per_epoch = seconds_per_epoch_near(checkpoint);
  return report;
}

bool has_entries(const fs::path& dir) { return fs::exists(dir) && !fs::is_empty(dir); }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unpaired simulation-to-X-ray translation with semantic token matching", "sim2xray"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  // synth
  SynthOptions synth;
  std::string synth_out;
  bool synth_force = false;
  auto* cmd_synth = app.add_subcommand("synth", "Write a seeded synthetic unpaired corpus");
  cmd_synth->add_option("--seed", synth.seed, "Corpus seed")->capture_default_str();
  cmd_synth->add_option("--nx", synth.n_x, "Number of simulation-style images")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_synth->add_option("--ny", synth.n_y, "Number of X-ray-style images")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd_synth->add_option("--size", synth.image_size, "Image side in pixels")->capture_default_str()
      ->check(CLI::Range(8, 4096));
  cmd_synth->add_option("--out", synth_out, "Output directory")->required();
  cmd_synth->add_flag("--force", synth_force, "Write into a non-empty directory");

  // train
  std::string train_config;
  TrainOverrides train_over;
  std::uint64_t seed_value = 0;
  int epochs_value = 0;
  auto* cmd_train = app.add_subcommand("train", "Train a translation model from a config file");
  cmd_train->add_option("--config", train_config, "YAML config file")->required()->check(CLI::ExistingFile);
  cmd_train->add_option("--ablation", train_over.ablation, "full | no_self | no_cross | gan_only")
      ->check(CLI::IsMember({"full", "no_self", "no_cross", "gan_only"}));
  auto* seed_opt = cmd_train->add_option("--seed", seed_value, "Override training.seed");
  auto* epochs_opt = cmd_train->add_option("--epochs", epochs_value, "Override training.epochs")
                         ->check(CLI::PositiveNumber);
  cmd_train->add_option("--out", train_over.out, "Override the run directory");
  cmd_train->add_option("--data-x", train_over.data_x, "Override data.dir_x");
  cmd_train->add_option("--data-y", train_over.data_y, "Override data.dir_y");

  // translate
  std::string tr_checkpoint, tr_in, tr_out;
  auto* cmd_translate = app.add_subcommand("translate", "Translate a directory of PNG images");
  cmd_translate->add_option("--checkpoint", tr_checkpoint)->required()->check(CLI::ExistingFile);
  cmd_translate->add_option("--in", tr_in)->required()->check(CLI::ExistingDirectory);
  cmd_translate->add_option("--out", tr_out)->required();

  // eval
  std::string ev_checkpoint, ev_x, ev_y, ev_embedder = "tokenizer", ev_out, ev_method = "Sim2Xray";
  bool ev_identity = false;
  auto* cmd_eval = app.add_subcommand("eval", "Fréchet distance, latency and parameter report");
  cmd_eval->add_option("--checkpoint", ev_checkpoint)->required()->check(CLI::ExistingFile);
  cmd_eval->add_option("--data-x", ev_x)->required()->check(CLI::ExistingDirectory);
  cmd_eval->add_option("--data-y", ev_y)->required()->check(CLI::ExistingDirectory);
  cmd_eval->add_option("--embedder", ev_embedder, "tokenizer | classifier:<torchscript file>")->capture_default_str();
  cmd_eval->add_flag("--identity", ev_identity, "Score the raw x images instead of G(x)");
  cmd_eval->add_option("--method", ev_method, "Row label in the table")->capture_default_str();
  cmd_eval->add_option("--out", ev_out, "Directory for eval_report.json and eval_table.txt");

  // ablate
  std::string ab_config, ab_out, ab_embedder = "tokenizer";
  int ab_seeds = 3;
  int ab_epochs = 0;
  auto* cmd_ablate = app.add_subcommand("ablate", "Train and score full, no_self and no_cross over k seeds");
  cmd_ablate->add_option("--config", ab_config)->required()->check(CLI::ExistingFile);
  cmd_ablate->add_option("--seeds", ab_seeds, "Seeds per mode")->capture_default_str()->check(CLI::PositiveNumber);
  auto* ab_epochs_opt = cmd_ablate->add_option("--epochs", ab_epochs, "Override training.epochs")
                            ->check(CLI::PositiveNumber);
  cmd_ablate->add_option("--out", ab_out, "Sweep directory (default: <config out>/ablation)");
  cmd_ablate->add_option("--embedder", ab_embedder)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*cmd_synth) {
      if (has_entries(synth_out) && !synth_force) {
        err << "error: " << synth_out << " is not empty; pass --force to overwrite\n";
        return kExitUsage;
      }
      const auto r = synth_corpus(synth, synth_out);
      out << r.manifest.string() << '\n';
      return kExitOk;
    }

    if (*cmd_train) {
      if (*seed_opt) train_over.seed = seed_value;
      if (*epochs_opt) train_over.epochs = epochs_value;
      const auto r = run_training(train_config, train_over.to_patch(), command_line(argc, argv), out);
      out << "manifest: " << r.manifest.string() << '\n';
      out << "checkpoint: " << r.summary.checkpoint.string() << " (" << hex64(r.summary.checkpoint_checksum) << ")\n";
      out << "seconds/epoch: " << r.summary.seconds_per_epoch() << '\n';
      return kExitOk;
    }

    if (*cmd_translate) {
      auto model = load_checkpoint(tr_checkpoint);
      const auto folder = load_folder(tr_in, model.config.data.image_size, model.config.data.channels);
      auto result = translate(model.generator, folder.images);
      fs::create_directories(tr_out);
      for (std::size_t i = 0; i < folder.images.size(); ++i) {
        write_png(fs::path(tr_out) / folder.names[i], to_raw(result.images[i]));
      }
      ojson lat;
      lat["images"] = folder.images.size();
      lat["mean_ms"] = result.latency.mean_ms;
      lat["median_ms"] = result.latency.median_ms;
      lat["p95_ms"] = result.latency.p95_ms;
      lat["per_image_ms"] = result.latency.per_image_ms;
      write_text_atomic(fs::path(tr_out) / "latency.json", lat.dump(2) + "\n");
      out << "translated " << folder.images.size() << " images; mean " << std::fixed << std::setprecision(3)
          << result.latency.mean_ms << " ms/image (median " << result.latency.median_ms << ", p95 "
          << result.latency.p95_ms << ")\n";
      return kExitOk;
    }

    if (*cmd_eval) {
      const auto report = evaluate_checkpoint(ev_checkpoint, ev_x, ev_y, ev_embedder, ev_identity, ev_method);
      const auto json_text = report_to_json(report).dump(2) + "\n";
      const auto table = format_table({report});
      if (!ev_out.empty()) {
        fs::create_directories(ev_out);
        write_text_atomic(fs::path(ev_out) / "eval_report.json", json_text);
        write_text_atomic(fs::path(ev_out) / "eval_table.txt", table);
      }
      out << json_text << table;
      return kExitOk;
    }

    if (*cmd_ablate) {
      const auto base = load_config(ab_config);
      const fs::path sweep = ab_out.empty() ? fs::path(base.out_dir) / "ablation" : fs::path(absolute(ab_out));
      const std::vector<std::pair<std::string, std::string>> modes = {
          {"full", "Sim2Xray"}, {"no_self", "Sim2Xray (w/o self-domain)"}, {"no_cross", "Sim2Xray (w/o cross-domain)"}};
      std::vector<EvalReport> rows;
      ojson sweep_json = ojson::array();
      for (const auto& [mode, label] : modes) {
        double fid_sum = 0.0, spe_sum = 0.0;
        EvalReport row;
        ojson runs = ojson::array();
        for (int k = 0; k < ab_seeds; ++k) {
          TrainOverrides o;
          o.ablation = mode;
          o.seed = base.training.seed + static_cast<std::uint64_t>(k);
          if (*ab_epochs_opt) o.epochs = ab_epochs;
          o.out = (sweep / mode / ("seed_" + std::to_string(*o.seed))).string();
          const auto r = run_training(ab_config, o.to_patch(), command_line(argc, argv), out);
          auto rep = evaluate_checkpoint(r.summary.checkpoint, r.config.data.dir_x, r.config.data.dir_y, ab_embedder,
                                         false, label);
          fid_sum += rep.fid_generated_vs_y;
          spe_sum += r.summary.seconds_per_epoch();
          runs.push_back({{"seed", *o.seed},
                          {"manifest", absolute(r.manifest.string())},
                          {"fid_generated_vs_y", rep.fid_generated_vs_y},
                          {"fid_x_vs_y", rep.fid_x_vs_y}});
          row = rep;
          out << mode << " seed " << *o.seed << ": desk-FID " << rep.fid_generated_vs_y << '\n';
        }
        row.method = label;
        row.fid_generated_vs_y = fid_sum / ab_seeds;
        row.seconds_per_epoch = spe_sum / ab_seeds;
        rows.push_back(row);
        sweep_json.push_back({{"mode", mode}, {"method", label}, {"mean_fid", row.fid_generated_vs_y}, {"runs", runs}});
      }
      const auto table = format_table(rows);
      fs::create_directories(sweep);
      write_text_atomic(sweep / "ablation.json", sweep_json.dump(2) + "\n");
      write_text_atomic(sweep / "ablation.txt", table);
      out << table;
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sim2xray
