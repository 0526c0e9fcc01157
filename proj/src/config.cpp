#include "cohiclust/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace cohiclust {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& problem) {
  throw std::invalid_argument(field + ": " + problem);
}

void check_keys(const json& section, const std::string& name,
                std::initializer_list<const char*> allowed) {
  for (auto it = section.begin(); it != section.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed)
      if (it.key() == key) ok = true;
    if (!ok) fail(name + "." + it.key(), "unknown field");
  }
}

template <class T>
T field_or(const json& section, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const json::exception&) {
    fail(std::string(key), "has the wrong type");
  }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"profile", "seed", "output_dir", "dataset", "encoder", "tree", "contrast", "loss",
              "schedule", "augmentation"});

  RunConfig config;
  config.profile = field_or<std::string>(j, "profile", "");
  if (!config.profile.empty()) {
    const Profile p = named_profile(config.profile);
    config.tree_depth = p.tree_depth;
    config.schedule = p.schedule;
    config.encoder.arch = p.encoder_arch;
  }
  config.seed = field_or<uint64_t>(j, "seed", config.seed);
  config.output_dir = field_or<std::string>(j, "output_dir", config.output_dir);
  config.augmentation = field_or<std::string>(j, "augmentation", config.augmentation);

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset",
               {"source", "path", "labels_path", "samples", "classes", "dim", "separation",
                "seed", "limit", "split"});
    if (d.contains("split")) {
      const std::string split = d.at("split").get<std::string>();
      if (split == "all")
        config.dataset.split = DatasetSpec::Split::all;
      else if (split == "train")
        config.dataset.split = DatasetSpec::Split::train;
      else if (split == "test")
        config.dataset.split = DatasetSpec::Split::test;
      else
        fail("dataset.split", "expected all|train|test, got '" + split + "'");
    }
    config.dataset.source =
        data_source_from_string(field_or<std::string>(d, "source", "synthetic-gaussians"));
    config.dataset.path = field_or<std::string>(d, "path", "");
    config.dataset.labels_path = field_or<std::string>(d, "labels_path", "");
    config.dataset.samples = field_or<int>(d, "samples", config.dataset.samples);
    config.dataset.classes = field_or<int>(d, "classes", config.dataset.classes);
    config.dataset.dim = field_or<int>(d, "dim", config.dataset.dim);
    config.dataset.separation = field_or<double>(d, "separation", config.dataset.separation);
    config.dataset.seed = field_or<uint64_t>(d, "seed", config.dataset.seed);
    config.dataset.limit = field_or<int>(d, "limit", 0);
  }
  if (config.dataset.source != DataSource::synthetic_gaussians && config.dataset.path.empty())
    fail("dataset.path", "required for source '" + to_string(config.dataset.source) + "'");

  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    check_keys(e, "encoder", {"arch", "input_dim", "channels", "height", "width", "embed_dim"});
    config.encoder.arch = field_or<std::string>(e, "arch", config.encoder.arch);
    config.encoder.input_dim = field_or<int>(e, "input_dim", 0);
    config.encoder.channels = field_or<int>(e, "channels", 0);
    config.encoder.height = field_or<int>(e, "height", 0);
    config.encoder.width = field_or<int>(e, "width", 0);
    config.encoder.embed_dim = field_or<int>(e, "embed_dim", config.encoder.embed_dim);
  }
  if (!registered_architectures().count(config.encoder.arch))
    fail("encoder.arch", "unknown architecture '" + config.encoder.arch + "'");

  if (j.contains("tree")) {
    check_keys(j.at("tree"), "tree", {"depth"});
    config.tree_depth = field_or<int>(j.at("tree"), "depth", config.tree_depth);
  }
  if (config.tree_depth < 1 || config.tree_depth > 10)
    fail("tree.depth", "must lie in [1, 10], got " + std::to_string(config.tree_depth));

  if (j.contains("contrast")) {
    const json& c = j.at("contrast");
    check_keys(c, "contrast", {"mode", "dim"});
    config.contrast_mode =
        contrast_mode_from_string(field_or<std::string>(c, "mode", "identity"));
    config.contrast_dim = field_or<int>(c, "dim", 0);
  }

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, "loss", {"beta1", "beta2", "temperature", "level_range", "epsilon"});
    if (l.contains("beta1")) {
      if (l.at("beta1").is_string()) {
        if (l.at("beta1") != "auto") fail("loss.beta1", "expected a number or \"auto\"");
        config.loss.beta1 = -1;
      } else {
        config.loss.beta1 = l.at("beta1").get<double>();
        if (config.loss.beta1 < 0) fail("loss.beta1", "must be >= 0");
      }
    }
    config.loss.beta2 = field_or<double>(l, "beta2", config.loss.beta2);
    config.loss.temperature = field_or<double>(l, "temperature", config.loss.temperature);
    if (l.contains("level_range"))
      config.loss.level_range = level_range_from_string(l.at("level_range").get<std::string>());
    config.loss.epsilon = field_or<double>(l, "epsilon", config.loss.epsilon);
  }
  try {
    config.loss.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()));
  }

  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, "schedule",
               {"pretrain_epochs", "tree_epochs", "prune_start_epoch", "target_leaves",
                "batch_size", "learning_rate", "weight_decay", "eval_every"});
    config.schedule.pretrain_epochs =
        field_or<int>(s, "pretrain_epochs", config.schedule.pretrain_epochs);
    config.schedule.tree_epochs = field_or<int>(s, "tree_epochs", config.schedule.tree_epochs);
    config.schedule.prune_start_epoch =
        field_or<int>(s, "prune_start_epoch", config.schedule.prune_start_epoch);
    config.schedule.target_leaves =
        field_or<int>(s, "target_leaves", config.schedule.target_leaves);
    config.schedule.batch_size = field_or<int>(s, "batch_size", config.schedule.batch_size);
    config.schedule.optimizer.learning_rate =
        field_or<double>(s, "learning_rate", config.schedule.optimizer.learning_rate);
    config.schedule.optimizer.weight_decay =
        field_or<double>(s, "weight_decay", config.schedule.optimizer.weight_decay);
    config.schedule.eval_every = field_or<int>(s, "eval_every", config.schedule.eval_every);
  }
  try {
    config.schedule.validate(config.tree_depth);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()));
  }

  if (config.augmentation != "auto") AugmentationPolicy::preset(config.augmentation);  // validates
  return config;
}

RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config_text(buffer.str());
}

void bind_encoder_to_dataset(RunConfig& config, const Dataset& data) {
  EncoderSpec& enc = config.encoder;
  if (data.is_image()) {
    if (enc.arch == "mlp-small" && enc.channels == 0 && enc.input_dim == 0)
      enc.input_dim = data.dim();
    if (enc.arch != "mlp-small") {
      if (enc.channels == 0) {
        enc.channels = data.channels;
        enc.height = data.height;
        enc.width = data.width;
      } else if (enc.channels != data.channels || enc.height != data.height ||
                 enc.width != data.width) {
        fail("encoder", "image shape " + std::to_string(enc.channels) + "x" +
                            std::to_string(enc.height) + "x" + std::to_string(enc.width) +
                            " does not match the dataset (" + std::to_string(data.channels) +
                            "x" + std::to_string(data.height) + "x" +
                            std::to_string(data.width) + ")");
      }
    }
  } else {
    if (enc.arch != "mlp-small")
      fail("encoder.arch", "'" + enc.arch + "' needs image data, dataset is flat vectors");
    if (enc.input_dim == 0) enc.input_dim = data.dim();
    if (enc.input_dim != data.dim())
      fail("encoder.input_dim", "dataset provides " + std::to_string(data.dim()) +
                                    " features, encoder expects " +
                                    std::to_string(enc.input_dim));
  }
  enc = resolve_encoder_spec(enc);
  if (enc.flat_dim() != data.dim())
    fail("encoder", "input size " + std::to_string(enc.flat_dim()) +
                        " does not match dataset dimension " + std::to_string(data.dim()));
}

AugmentationPolicy resolve_policy(const RunConfig& config, const Dataset& data) {
  if (config.augmentation == "auto") return AugmentationPolicy::default_for(data);
  return AugmentationPolicy::preset(config.augmentation);
}

std::string resolve_output_dir(const RunConfig& config) {
  namespace fs = std::filesystem;
  const char* root = std::getenv("COHICLUST_OUTPUT_ROOT");
  fs::path dir(config.output_dir);
  if (root && *root && dir.is_relative()) dir = fs::path(root) / dir;
  return dir.string();
}

}  // namespace cohiclust
