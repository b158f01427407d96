#include "sim2xray/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "sim2xray/errors.hpp"

namespace sim2xray {

using nlohmann::json;

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_self: return "no_self";
    case Ablation::no_cross: return "no_cross";
    case Ablation::gan_only: return "gan_only";
  }
  return "full";
}

Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_self") return Ablation::no_self;
  if (s == "no_cross") return Ablation::no_cross;
  if (s == "gan_only") return Ablation::gan_only;
  throw ConfigError("training.ablation", "expected one of full, no_self, no_cross, gan_only; got '" + s + "'");
}

std::string to_string(AdversarialForm f) {
  return f == AdversarialForm::saturating ? "saturating" : "non_saturating";
}

std::string to_string(DistanceMode m) { return m == DistanceMode::row_cosine ? "row_cosine" : "flattened_cosine"; }

LossConfig effective_loss(const LossConfig& loss, Ablation ablation) {
  LossConfig out = loss;
  switch (ablation) {
    case Ablation::full: break;
    case Ablation::no_self: out.alpha = 0.0; break;
    case Ablation::no_cross: out.alpha = 1.0; break;
    case Ablation::gan_only: out.lambda = 0.0; break;
  }
  return out;
}

void TrainConfig::finalize() {
  if (block_ids.empty()) block_ids = default_block_ids(tokenizer.depth);
  generator.in_channels = data.channels;
  generator.out_channels = data.channels;
  generator.seed = training.seed;
  discriminator.input_dim = tokenizer.dim;
  discriminator.seed = training.seed + 1;
  loss = effective_loss(loss, training.ablation);
}

void TrainConfig::validate() const {
  if (data.image_size < 8) throw ConfigError("data.image_size", "must be >= 8");
  if (data.channels != 1 && data.channels != 3) throw ConfigError("data.channels", "must be 1 or 3");
  tokenizer.validate();
  if (tokenizer.channels != data.channels) {
    throw ConfigError("tokenizer.channels", "must equal data.channels (" + std::to_string(data.channels) + ")");
  }
  if (data.image_size % tokenizer.patch_size != 0) {
    throw ConfigError("data.image_size", "must be divisible by tokenizer.patch_size");
  }
  if (data.image_size % (1 << generator.downsample) != 0) {
    throw ConfigError("data.image_size", "must be divisible by 2^generator.downsample");
  }
  if (block_ids.empty()) throw ConfigError("tokenizer.block_ids", "must not be empty");
  for (std::size_t i = 0; i < block_ids.size(); ++i) {
    if (block_ids[i] < 1 || block_ids[i] > tokenizer.depth) {
      throw ConfigError("tokenizer.block_ids", "ids must lie in 1..tokenizer.depth");
    }
    if (i > 0 && block_ids[i] <= block_ids[i - 1]) throw ConfigError("tokenizer.block_ids", "ids must increase");
  }
  generator.validate();
  discriminator.validate();
  loss.validate();
  if (!loss.block_weights.empty() && loss.block_weights.size() != block_ids.size()) {
    throw ConfigError("loss.block_weights", "needs one weight per block id");
  }
  if (training.epochs < 1) throw ConfigError("training.epochs", "must be >= 1");
  if (training.batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
  if (!(training.lr_g > 0)) throw ConfigError("training.lr_g", "must be > 0");
  if (!(training.lr_d > 0)) throw ConfigError("training.lr_d", "must be > 0");
  if (!(training.beta1 >= 0 && training.beta1 < 1)) throw ConfigError("training.beta1", "must lie in [0, 1)");
  if (!(training.beta2 >= 0 && training.beta2 < 1)) throw ConfigError("training.beta2", "must lie in [0, 1)");
  if (training.checkpoint_every < 0) throw ConfigError("training.checkpoint_every", "must be >= 0");
}

namespace {

// Walks one JSON object, rejecting unknown keys and reporting type errors with paths.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a mapping");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(key(item.key()), "unknown key");
    }
  }

  template <typename T>
  void get(const char* name, T& out) {
    seen_.insert(name);
    if (!j_.contains(name) || j_.at(name).is_null()) return;
    try {
      out = j_.at(name).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(key(name), "wrong type (" + std::string(j_.at(name).type_name()) + ")");
    }
  }

  bool has(const char* name) const { return j_.contains(name) && !j_.at(name).is_null(); }
  Section sub(const char* name) {
    seen_.insert(name);
    static const json empty = json::object();
    return Section(has(name) ? j_.at(name) : empty, key(name));
  }
  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (base / path).lexically_normal().string();
}

}  // namespace

TrainConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  TrainConfig c;
  {
    Section root(j, "");
    {
      auto s = root.sub("data");
      s.get("dir_x", c.data.dir_x);
      s.get("dir_y", c.data.dir_y);
      s.get("image_size", c.data.image_size);
      s.get("channels", c.data.channels);
    }
    c.tokenizer.channels = c.data.channels;
    {
      auto s = root.sub("tokenizer");
      s.get("source", c.tokenizer_source);
      s.get("patch_size", c.tokenizer.patch_size);
      s.get("channels", c.tokenizer.channels);
      s.get("dim", c.tokenizer.dim);
      s.get("depth", c.tokenizer.depth);
      s.get("heads", c.tokenizer.heads);
      s.get("mlp_ratio", c.tokenizer.mlp_ratio);
      s.get("class_token", c.tokenizer.class_token);
      s.get("seed", c.tokenizer.seed);
      s.get("block_ids", c.block_ids);
    }
    {
      auto s = root.sub("generator");
      s.get("width", c.generator.width);
      s.get("downsample", c.generator.downsample);
      s.get("residual_blocks", c.generator.residual_blocks);
      s.get("zero_init_output", c.generator.zero_init_output);
    }
    {
      auto s = root.sub("discriminator");
      s.get("hidden", c.discriminator.hidden);
      s.get("zero_init", c.discriminator.zero_init);
    }
    {
      auto s = root.sub("loss");
      s.get("alpha", c.loss.alpha);
      s.get("lambda", c.loss.lambda);
      s.get("block_weights", c.loss.block_weights);
      std::string distance = to_string(c.loss.distance);
      s.get("distance", distance);
      if (distance == "row_cosine") c.loss.distance = DistanceMode::row_cosine;
      else if (distance == "flattened_cosine") c.loss.distance = DistanceMode::flattened_cosine;
      else throw ConfigError("loss.distance", "expected row_cosine or flattened_cosine");
    }
    {
      auto s = root.sub("training");
      s.get("seed", c.training.seed);
      s.get("epochs", c.training.epochs);
      s.get("batch_size", c.training.batch_size);
      s.get("lr_g", c.training.lr_g);
      s.get("lr_d", c.training.lr_d);
      s.get("beta1", c.training.beta1);
      s.get("beta2", c.training.beta2);
      s.get("checkpoint_every", c.training.checkpoint_every);
      s.get("deterministic", c.training.deterministic);
      std::string adversarial = to_string(c.training.adversarial);
      s.get("adversarial", adversarial);
      if (adversarial == "saturating") c.training.adversarial = AdversarialForm::saturating;
      else if (adversarial == "non_saturating") c.training.adversarial = AdversarialForm::non_saturating;
      else throw ConfigError("training.adversarial", "expected saturating or non_saturating");
      std::string ablation = to_string(c.training.ablation);
      s.get("ablation", ablation);
      c.training.ablation = parse_ablation(ablation);
    }
    root.get("out", c.out_dir);
  }
  c.data.dir_x = resolve(c.data.dir_x, base_dir);
  c.data.dir_y = resolve(c.data.dir_y, base_dir);
  c.out_dir = resolve(c.out_dir, base_dir);
  if (c.tokenizer_source != "scratch") c.tokenizer_source = resolve(c.tokenizer_source, base_dir);
  c.finalize();
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = {{"dir_x", c.data.dir_x}, {"dir_y", c.data.dir_y}, {"image_size", c.data.image_size},
               {"channels", c.data.channels}};
  j["tokenizer"] = {{"source", c.tokenizer_source},
                    {"patch_size", c.tokenizer.patch_size},
                    {"channels", c.tokenizer.channels},
                    {"dim", c.tokenizer.dim},
                    {"depth", c.tokenizer.depth},
                    {"heads", c.tokenizer.heads},
                    {"mlp_ratio", c.tokenizer.mlp_ratio},
                    {"class_token", c.tokenizer.class_token},
                    {"seed", c.tokenizer.seed},
                    {"block_ids", c.block_ids}};
  j["generator"] = {{"width", c.generator.width},
                    {"downsample", c.generator.downsample},
                    {"residual_blocks", c.generator.residual_blocks},
                    {"zero_init_output", c.generator.zero_init_output}};
  j["discriminator"] = {{"hidden", c.discriminator.hidden}, {"zero_init", c.discriminator.zero_init}};
  j["loss"] = {{"alpha", c.loss.alpha},
               {"lambda", c.loss.lambda},
               {"block_weights", c.loss.block_weights},
               {"distance", to_string(c.loss.distance)}};
  j["training"] = {{"seed", c.training.seed},
                   {"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"lr_g", c.training.lr_g},
                   {"lr_d", c.training.lr_d},
                   {"beta1", c.training.beta1},
                   {"beta2", c.training.beta2},
                   {"adversarial", to_string(c.training.adversarial)},
                   {"ablation", to_string(c.training.ablation)},
                   {"checkpoint_every", c.training.checkpoint_every},
                   {"deterministic", c.training.deterministic}};
  j["out"] = c.out_dir;
  return j;
}

namespace {

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const auto& text = node.Scalar();
      if (node.Tag() == "!") return text;  // quoted
      bool b;
      if (YAML::convert<bool>::decode(node, b)) return b;
      try {
        std::size_t used = 0;
        const long long i = std::stoll(text, &used);
        if (used == text.size()) return i;
      } catch (...) {
      }
      try {
        std::size_t used = 0;
        const double d = std::stod(text, &used);
        if (used == text.size()) return d;
      } catch (...) {
      }
      return text;
    }
  }
  return nullptr;
}

}  // namespace

json yaml_text_to_json(const std::string& text) {
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("config parse error: ") + e.what());
  }
}

TrainConfig load_config(const std::filesystem::path& path, const json& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto doc = yaml_text_to_json(buf.str());
  if (doc.is_null()) doc = json::object();
  if (!overrides.empty()) doc.merge_patch(overrides);
  return config_from_json(doc, std::filesystem::absolute(path).parent_path());
}

}  // namespace sim2xray
