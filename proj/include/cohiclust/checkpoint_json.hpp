#pragma once

// Checkpoint header (de)serialization, split out to keep training.hpp free of
// the JSON dependency surface.

#include <cstring>

#include <json.hpp>

#include "cohiclust/training.hpp"

namespace cohiclust {

template <class S>
std::string Trainer<S>::checkpoint_header() {
  nlohmann::ordered_json j;
  j["format"] = "cohiclust-ckpt";
  j["version"] = 1;
  j["scalar"] = ckpt::scalar_tag<S>();
  j["encoder"] = {{"arch", model_.spec.arch},
                  {"input_dim", model_.spec.input_dim},
                  {"channels", model_.spec.channels},
                  {"height", model_.spec.height},
                  {"width", model_.spec.width},
                  {"embed_dim", model_.spec.embed_dim}};
  j["tree_depth"] = model_.tree_depth;
  j["contrast"] = {{"mode", to_string(model_.contrast->mode())},
                   {"dim", model_.contrast->out_dim()}};
  j["topology"] = topo_.to_record();
  j["phase"] = to_string(phase_);
  j["pretrain_done"] = pretrain_done_;
  j["tree_done"] = tree_done_;
  j["global_epoch"] = global_epoch_;
  j["global_step"] = global_step_;
  j["seed"] = seed_;
  auto params = model_.all_params();
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (auto* p : params)
    manifest.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  j["params"] = manifest;
  return j.dump();
}

template <class S>
typename Trainer<S>::Restored Trainer<S>::parse_header(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "cohiclust-ckpt" || j.at("version") != 1)
      throw format_error("checkpoint: unsupported format tag or version");
    Restored meta;
    meta.scalar = j.at("scalar");
    const auto& enc = j.at("encoder");
    meta.encoder.arch = enc.at("arch");
    meta.encoder.input_dim = enc.at("input_dim");
    meta.encoder.channels = enc.at("channels");
    meta.encoder.height = enc.at("height");
    meta.encoder.width = enc.at("width");
    meta.encoder.embed_dim = enc.at("embed_dim");
    meta.tree_depth = j.at("tree_depth");
    meta.contrast_mode = contrast_mode_from_string(j.at("contrast").at("mode"));
    meta.contrast_dim = j.at("contrast").at("dim");
    meta.topology = TreeTopology::from_record(j.at("topology"));
    phase_from_string(j.at("phase"));  // phase recomputed from the counters
    meta.pretrain_done = j.at("pretrain_done");
    meta.tree_done = j.at("tree_done");
    meta.global_epoch = j.at("global_epoch");
    meta.global_step = j.at("global_step");
    meta.seed = j.at("seed");
    for (const auto& entry : j.at("params"))
      meta.param_shapes.emplace_back(long(entry.at("rows")), long(entry.at("cols")));
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("checkpoint: missing or malformed header field: ") + e.what());
  }
}

}  // namespace cohiclust
