#pragma once

// Dataset ingestion and self-supervised pair generation. Labels ride along
// for evaluation but no training-side operation reads them: augmentation and
// batching work on features alone.

#include <random>
#include <string>
#include <vector>

#include "cohiclust/common.hpp"

namespace cohiclust {

enum class DataSource { synthetic_gaussians, idx_grayscale, image_folder };

DataSource data_source_from_string(const std::string& s);
std::string to_string(DataSource s);

struct DatasetSpec {
  DataSource source = DataSource::synthetic_gaussians;
  std::string path;         // idx: file or directory; folder: class-per-subdirectory root
  std::string labels_path;  // idx: explicit labels file (otherwise inferred)
  int samples = 1000;       // synthetic only
  int classes = 4;          // synthetic only
  int dim = 16;             // synthetic only
  double separation = 6.0;  // synthetic only: component mean scale
  uint64_t seed = 1;
  int limit = 0;  // cap sample count after load, 0 = keep all
  // idx directories: which canonical files to ingest
  enum class Split { all, train, test };
  Split split = Split::all;
};

struct Dataset {
  MatXf features;  // n x dim, rows in [0,1] for image sources
  std::vector<int> labels;
  std::vector<std::string> class_names;
  int channels = 0, height = 0, width = 0;  // zero for flat vector data
  VecXf feature_std;                        // per-dimension std, noise-scale reference

  int size() const { return int(features.rows()); }
  int dim() const { return int(features.cols()); }
  bool is_image() const { return channels > 0; }
  int num_classes() const { return int(class_names.size()); }
};

Dataset load_dataset(const DatasetSpec& spec);

// IDX (big-endian magic + dims + raw uint8 payload).
Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path);
void write_idx_images(const std::string& path, const MatXf& images, int height, int width);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

enum class TransformKind {
  gaussian_noise,    // a = sigma relative to per-dimension std
  crop_resize,       // side scale drawn from [a, b], bilinear resize back
  rotate,            // angle drawn from [-a, a] degrees
  hflip,             // a = probability
  color_jitter,      // brightness a, contrast b, saturation c (factor ranges)
  random_grayscale,  // a = probability
};

struct Transform {
  TransformKind kind;
  double a = 0, b = 0, c = 0;
};

struct AugmentationPolicy {
  std::string name = "identity";
  std::vector<Transform> transforms;

  static AugmentationPolicy identity();
  // "identity", "vector-default", "grayscale-default", "color-default"
  static AugmentationPolicy preset(const std::string& name);
  // sensible preset for the dataset's modality
  static AugmentationPolicy default_for(const Dataset& data);
};

struct PairBatch {
  MatXf anchors;             // N raw samples
  MatXf views;               // N independently augmented views, row j from anchor j
  std::vector<int> indices;  // dataset rows of the anchors

  int size() const { return int(anchors.rows()); }
};

// One stochastic application of the policy to a single sample row.
VecXf augment_sample(const Dataset& data, const AugmentationPolicy& policy,
                     const VecXf& sample, std::mt19937_64& rng);

// Anchors sampled without replacement; reproducible for a fixed rng state.
PairBatch make_pair_batch(const Dataset& data, const AugmentationPolicy& policy, int batch_size,
                          std::mt19937_64& rng);
PairBatch make_pair_batch(const Dataset& data, const AugmentationPolicy& policy, int batch_size,
                          uint64_t seed);

// Deterministic 10-class glyph corpus (28x28 grayscale, random affine pose +
// pixel noise). Stands in for handwritten-digit data in tests and demos.
Dataset make_digit_corpus(int n, uint64_t seed);
void write_digit_corpus_idx(const std::string& dir, int n, uint64_t seed);

}  // namespace cohiclust
