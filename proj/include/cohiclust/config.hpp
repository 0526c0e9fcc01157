#pragma once

// Run configuration: one JSON file with sections for dataset, encoder, tree,
// loss, schedule and outputs. A named profile seeds the defaults; explicit
// fields override it. Validation failures carry the offending field name.

#include <string>

#include "cohiclust/data.hpp"
#include "cohiclust/losses.hpp"
#include "cohiclust/model.hpp"
#include "cohiclust/training.hpp"

namespace cohiclust {

struct RunConfig {
  std::string profile;  // empty or desk-scale / grayscale / cifar-like
  DatasetSpec dataset;
  EncoderSpec encoder;
  int tree_depth = 3;
  ContrastMode contrast_mode = ContrastMode::identity;
  int contrast_dim = 0;  // 0 = embed_dim
  LossConfig loss;
  TrainSchedule schedule;
  std::string augmentation = "auto";  // preset name, or auto by modality
  std::string output_dir = "runs/default";
  uint64_t seed = 1;
};

RunConfig parse_run_config_text(const std::string& json_text);
RunConfig parse_run_config_file(const std::string& path);

// Fills encoder input dims from the loaded dataset and cross-checks them.
void bind_encoder_to_dataset(RunConfig& config, const Dataset& data);

AugmentationPolicy resolve_policy(const RunConfig& config, const Dataset& data);

// Applies the COHICLUST_OUTPUT_ROOT override to relative output paths.
std::string resolve_output_dir(const RunConfig& config);

}  // namespace cohiclust
