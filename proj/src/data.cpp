#include "cohiclust/data.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace cohiclust {

DataSource data_source_from_string(const std::string& s) {
  if (s == "synthetic-gaussians") return DataSource::synthetic_gaussians;
  if (s == "idx-grayscale") return DataSource::idx_grayscale;
  if (s == "image-folder") return DataSource::image_folder;
  throw std::invalid_argument("dataset.source: unknown source '" + s + "'");
}

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::synthetic_gaussians: return "synthetic-gaussians";
    case DataSource::idx_grayscale: return "idx-grayscale";
    case DataSource::image_folder: return "image-folder";
  }
  return "?";
}

namespace {

void compute_feature_std(Dataset& data) {
  const int n = data.size();
  VecXf mean = data.features.colwise().mean();
  data.feature_std.resize(data.dim());
  for (int c = 0; c < data.dim(); ++c) {
    const float m = mean[c];
    float acc = 0;
    for (int r = 0; r < n; ++r) {
      const float d = data.features(r, c) - m;
      acc += d * d;
    }
    data.feature_std[c] = std::sqrt(acc / float(std::max(1, n - 1)));
  }
}

void apply_limit(Dataset& data, int limit) {
  if (limit <= 0 || limit >= data.size()) return;
  data.features.conservativeResize(limit, Eigen::NoChange);
  data.labels.resize(limit);
}

void finalize(Dataset& data, int limit) {
  apply_limit(data, limit);
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  compute_feature_std(data);
}

Dataset load_synthetic(const DatasetSpec& spec) {
  if (spec.samples < 1) throw std::invalid_argument("dataset.samples must be >= 1");
  if (spec.classes < 1) throw std::invalid_argument("dataset.classes must be >= 1");
  if (spec.dim < 1) throw std::invalid_argument("dataset.dim must be >= 1");
  auto rng = derive_rng(spec.seed, 'g', 'e', 'n');
  std::normal_distribution<double> unit(0.0, 1.0);

  MatXf means(spec.classes, spec.dim);
  for (int k = 0; k < spec.classes; ++k)
    for (int d = 0; d < spec.dim; ++d) means(k, d) = float(spec.separation * unit(rng));

  Dataset data;
  data.features.resize(spec.samples, spec.dim);
  data.labels.resize(spec.samples);
  for (int i = 0; i < spec.samples; ++i) {
    const int label = i % spec.classes;
    data.labels[i] = label;
    for (int d = 0; d < spec.dim; ++d)
      data.features(i, d) = means(label, d) + float(unit(rng));
  }
  for (int k = 0; k < spec.classes; ++k)
    data.class_names.push_back("component-" + std::to_string(k));
  return data;
}

uint32_t read_be32(std::istream& in, const std::string& path, size_t& offset) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw format_error(path + ": truncated at byte " + std::to_string(offset));
  offset += 4;
  return (uint32_t(bytes[0]) << 24) | (uint32_t(bytes[1]) << 16) | (uint32_t(bytes[2]) << 8) |
         uint32_t(bytes[3]);
}

}  // namespace

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::invalid_argument("dataset.path: cannot open '" + images_path + "'");
  size_t offset = 0;
  const uint32_t magic = read_be32(img, images_path, offset);
  if (magic != 0x00000803)
    throw format_error(images_path + ": bad image magic at byte 0 (got " + std::to_string(magic) +
                       ", want 2051)");
  const uint32_t n = read_be32(img, images_path, offset);
  const uint32_t rows = read_be32(img, images_path, offset);
  const uint32_t cols = read_be32(img, images_path, offset);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
    throw format_error(images_path + ": implausible dimensions at byte 8");
  std::vector<unsigned char> buffer(size_t(n) * rows * cols);
  img.read(reinterpret_cast<char*>(buffer.data()), std::streamsize(buffer.size()));
  if (size_t(img.gcount()) != buffer.size())
    throw format_error(images_path + ": truncated payload at byte " +
                       std::to_string(offset + size_t(img.gcount())));

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::invalid_argument("dataset.labels_path: cannot open '" + labels_path + "'");
  size_t loffset = 0;
  const uint32_t lmagic = read_be32(lab, labels_path, loffset);
  if (lmagic != 0x00000801)
    throw format_error(labels_path + ": bad label magic at byte 0 (got " + std::to_string(lmagic) +
                       ", want 2049)");
  const uint32_t ln = read_be32(lab, labels_path, loffset);
  if (ln != n)
    throw format_error(labels_path + ": label count " + std::to_string(ln) +
                       " does not match image count " + std::to_string(n));
  std::vector<unsigned char> labels(ln);
  lab.read(reinterpret_cast<char*>(labels.data()), std::streamsize(labels.size()));
  if (size_t(lab.gcount()) != labels.size())
    throw format_error(labels_path + ": truncated payload at byte " +
                       std::to_string(loffset + size_t(lab.gcount())));

  Dataset data;
  data.channels = 1;
  data.height = int(rows);
  data.width = int(cols);
  data.features.resize(n, rows * cols);
  data.labels.resize(n);
  int max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t p = 0; p < rows * cols; ++p)
      data.features(i, p) = float(buffer[size_t(i) * rows * cols + p]) / 255.0f;
    data.labels[i] = labels[i];
    max_label = std::max(max_label, int(labels[i]));
  }
  for (int k = 0; k <= max_label; ++k) data.class_names.push_back(std::to_string(k));
  return data;
}

void write_idx_images(const std::string& path, const MatXf& images, int height, int width) {
  if (images.cols() != height * width)
    throw std::invalid_argument("write_idx_images: shape mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument("write_idx_images: cannot open '" + path + "'");
  auto be32 = [&](uint32_t v) {
    unsigned char bytes[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                              (unsigned char)(v >> 8), (unsigned char)v};
    out.write(reinterpret_cast<char*>(bytes), 4);
  };
  be32(0x00000803);
  be32(uint32_t(images.rows()));
  be32(uint32_t(height));
  be32(uint32_t(width));
  for (int i = 0; i < images.rows(); ++i)
    for (int p = 0; p < images.cols(); ++p) {
      const float v = std::clamp(images(i, p), 0.0f, 1.0f);
      const unsigned char byte = (unsigned char)std::lround(v * 255.0f);
      out.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument("write_idx_labels: cannot open '" + path + "'");
  auto be32 = [&](uint32_t v) {
    unsigned char bytes[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                              (unsigned char)(v >> 8), (unsigned char)v};
    out.write(reinterpret_cast<char*>(bytes), 4);
  };
  be32(0x00000801);
  be32(uint32_t(labels.size()));
  for (int label : labels) {
    const unsigned char byte = (unsigned char)label;
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

namespace {

Dataset load_idx(const DatasetSpec& spec) {
  std::string images = spec.path, labels = spec.labels_path;
  if (fs::is_directory(spec.path)) {
    // Canonical file names; the split policy picks train, test, or both.
    std::vector<std::pair<std::string, std::string>> candidates;
    if (spec.split != DatasetSpec::Split::test)
      candidates.emplace_back("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
    if (spec.split != DatasetSpec::Split::train)
      candidates.emplace_back("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
    Dataset merged;
    bool found = false;
    for (auto& [img_name, lab_name] : candidates) {
      const fs::path img = fs::path(spec.path) / img_name;
      const fs::path lab = fs::path(spec.path) / lab_name;
      if (!fs::exists(img) || !fs::exists(lab)) continue;
      Dataset part = load_idx_pair(img.string(), lab.string());
      if (!found) {
        merged = std::move(part);
        found = true;
      } else {
        if (part.dim() != merged.dim())
          throw format_error(spec.path + ": idx files disagree on image shape");
        MatXf joined(merged.size() + part.size(), merged.dim());
        joined.topRows(merged.size()) = merged.features;
        joined.bottomRows(part.size()) = part.features;
        merged.features = std::move(joined);
        merged.labels.insert(merged.labels.end(), part.labels.begin(), part.labels.end());
        if (part.class_names.size() > merged.class_names.size())
          merged.class_names = part.class_names;
      }
    }
    if (!found)
      throw std::invalid_argument("dataset.path: no idx files for the requested split under '" +
                                  spec.path + "'");
    return merged;
  }
  if (labels.empty()) {
    labels = images;
    const auto pos = labels.find("images-idx3");
    if (pos == std::string::npos)
      throw std::invalid_argument("dataset.labels_path: cannot infer labels file from '" + images +
                                  "'");
    labels.replace(pos, std::string("images-idx3").size(), "labels-idx1");
  }
  return load_idx_pair(images, labels);
}

// Minimal netpbm reader: P2/P5 grayscale, P3/P6 color.
struct PnmImage {
  int channels = 0, height = 0, width = 0;
  std::vector<float> pixels;  // channel-major
};

PnmImage load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open image '" + path + "'");
  std::string magic;
  in >> magic;
  const bool binary = magic == "P5" || magic == "P6";
  const bool color = magic == "P3" || magic == "P6";
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw format_error(path + ": unsupported netpbm magic '" + magic + "'");
  auto next_int = [&]() {
    int v;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      if (!(in >> v)) throw format_error(path + ": truncated header");
      return v;
    }
  };
  PnmImage img;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  img.channels = color ? 3 : 1;
  if (maxval <= 0 || maxval > 255) throw format_error(path + ": unsupported maxval");
  const size_t count = size_t(img.channels) * img.height * img.width;
  std::vector<int> raw(count);
  if (binary) {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(count));
    if (size_t(in.gcount()) != count) throw format_error(path + ": truncated pixel data");
    for (size_t i = 0; i < count; ++i) raw[i] = bytes[i];
  } else {
    for (size_t i = 0; i < count; ++i)
      if (!(in >> raw[i])) throw format_error(path + ": truncated pixel data");
  }
  // netpbm interleaves channels; the tensor layout is channel-major
  img.pixels.resize(count);
  const int hw = img.height * img.width;
  for (int p = 0; p < hw; ++p)
    for (int c = 0; c < img.channels; ++c)
      img.pixels[size_t(c) * hw + p] = float(raw[size_t(p) * img.channels + c]) / float(maxval);
  return img;
}

Dataset load_image_folder(const DatasetSpec& spec) {
  if (!fs::is_directory(spec.path))
    throw std::invalid_argument("dataset.path: '" + spec.path + "' is not a directory");
  std::vector<std::string> class_dirs;
  for (auto& entry : fs::directory_iterator(spec.path))
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw std::invalid_argument("dataset.path: no class subdirectories under '" + spec.path + "'");

  Dataset data;
  std::vector<std::pair<int, PnmImage>> images;
  for (size_t k = 0; k < class_dirs.size(); ++k) {
    std::vector<std::string> files;
    for (auto& entry : fs::directory_iterator(fs::path(spec.path) / class_dirs[k])) {
      const auto ext = entry.path().extension().string();
      if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    for (auto& file : files) images.emplace_back(int(k), load_pnm(file));
  }
  if (images.empty())
    throw std::invalid_argument("dataset.path: no .pgm/.ppm images under '" + spec.path + "'");
  const auto& first = images.front().second;
  data.channels = first.channels;
  data.height = first.height;
  data.width = first.width;
  data.features.resize(int(images.size()), int(first.pixels.size()));
  data.labels.resize(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    const auto& [label, img] = images[i];
    if (img.channels != data.channels || img.height != data.height || img.width != data.width)
      throw std::invalid_argument("dataset.path: images disagree on shape");
    data.labels[i] = label;
    for (size_t p = 0; p < img.pixels.size(); ++p) data.features(int(i), int(p)) = img.pixels[p];
  }
  data.class_names = class_dirs;
  return data;
}

}  // namespace

Dataset load_dataset(const DatasetSpec& spec) {
  Dataset data;
  switch (spec.source) {
    case DataSource::synthetic_gaussians: data = load_synthetic(spec); break;
    case DataSource::idx_grayscale: data = load_idx(spec); break;
    case DataSource::image_folder: data = load_image_folder(spec); break;
  }
  finalize(data, spec.limit);
  return data;
}

PairBatch make_pair_batch(const Dataset& data, const AugmentationPolicy& policy, int batch_size,
                          std::mt19937_64& rng) {
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2");
  if (batch_size > data.size())
    throw std::invalid_argument("batch size " + std::to_string(batch_size) +
                                " exceeds dataset size " + std::to_string(data.size()));
  // Partial Fisher-Yates over the index range: without replacement.
  std::vector<int> pool(data.size());
  std::iota(pool.begin(), pool.end(), 0);
  PairBatch batch;
  batch.indices.resize(batch_size);
  for (int j = 0; j < batch_size; ++j) {
    std::uniform_int_distribution<int> pick(j, int(pool.size()) - 1);
    std::swap(pool[j], pool[pick(rng)]);
    batch.indices[j] = pool[j];
  }
  batch.anchors.resize(batch_size, data.dim());
  batch.views.resize(batch_size, data.dim());
  for (int j = 0; j < batch_size; ++j) {
    batch.anchors.row(j) = data.features.row(batch.indices[j]);
    VecXf anchor = batch.anchors.row(j).transpose();
    batch.views.row(j) = augment_sample(data, policy, anchor, rng).transpose();
  }
  return batch;
}

PairBatch make_pair_batch(const Dataset& data, const AugmentationPolicy& policy, int batch_size,
                          uint64_t seed) {
  auto rng = derive_rng(seed, 'b', 'a', 't');
  return make_pair_batch(data, policy, batch_size, rng);
}

void write_digit_corpus_idx(const std::string& dir, int n, uint64_t seed) {
  Dataset corpus = make_digit_corpus(n, seed);
  fs::create_directories(dir);
  write_idx_images((fs::path(dir) / "train-images-idx3-ubyte").string(), corpus.features,
                   corpus.height, corpus.width);
  write_idx_labels((fs::path(dir) / "train-labels-idx1-ubyte").string(), corpus.labels);
}

}  // namespace cohiclust
