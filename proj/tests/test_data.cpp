#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cohiclust/data.hpp"

using namespace cohiclust;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("cohiclust_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("synthetic gaussians generator") {
  DatasetSpec spec;
  spec.source = DataSource::synthetic_gaussians;
  spec.samples = 1000;
  spec.classes = 4;
  spec.dim = 16;
  spec.seed = 7;
  auto data = load_dataset(spec);
  CHECK(data.size() == 1000);
  CHECK(data.dim() == 16);
  CHECK(*std::max_element(data.labels.begin(), data.labels.end()) == 3);
  CHECK(*std::min_element(data.labels.begin(), data.labels.end()) == 0);

  auto again = load_dataset(spec);
  CHECK((data.features - again.features).cwiseAbs().maxCoeff() == 0.0f);

  spec.samples = 0;
  CHECK_THROWS_AS(load_dataset(spec), std::invalid_argument);
}

TEST_CASE("idx files round-trip through the loader") {
  auto dir = temp_dir("idx");
  write_digit_corpus_idx(dir.string(), 100, 3);

  DatasetSpec spec;
  spec.source = DataSource::idx_grayscale;
  spec.path = dir.string();
  auto data = load_dataset(spec);
  CHECK(data.size() == 100);
  CHECK(data.channels == 1);
  CHECK(data.height == 28);
  CHECK(data.width == 28);
  CHECK(data.dim() == 784);
  CHECK(data.class_names.size() == 10);
  CHECK(data.features.minCoeff() >= 0.0f);
  CHECK(data.features.maxCoeff() <= 1.0f);

  SUBCASE("explicit file path with inferred labels") {
    spec.path = (dir / "train-images-idx3-ubyte").string();
    spec.labels_path.clear();
    auto direct = load_dataset(spec);
    CHECK(direct.size() == 100);
  }
  SUBCASE("limit caps the sample count") {
    spec.limit = 32;
    auto limited = load_dataset(spec);
    CHECK(limited.size() == 32);
  }
  SUBCASE("split policy selects the canonical files") {
    // add a t10k pair next to the train pair
    auto t10k = make_digit_corpus(40, 9);
    write_idx_images((dir / "t10k-images-idx3-ubyte").string(), t10k.features, 28, 28);
    write_idx_labels((dir / "t10k-labels-idx1-ubyte").string(), t10k.labels);
    spec.path = dir.string();
    spec.split = DatasetSpec::Split::all;
    CHECK(load_dataset(spec).size() == 140);
    spec.split = DatasetSpec::Split::train;
    CHECK(load_dataset(spec).size() == 100);
    spec.split = DatasetSpec::Split::test;
    CHECK(load_dataset(spec).size() == 40);
  }
  SUBCASE("bad magic is a parse error naming the byte offset") {
    auto bad = dir / "bad-images-idx3-ubyte";
    std::ofstream out(bad, std::ios::binary);
    const char junk[8] = {0, 0, 9, 9, 0, 0, 0, 1};
    out.write(junk, 8);
    out.close();
    spec.path = bad.string();
    spec.labels_path = (dir / "train-labels-idx1-ubyte").string();
    CHECK_THROWS_WITH_AS(load_dataset(spec),
                         doctest::Contains("bad image magic at byte 0"), format_error);
  }
  SUBCASE("truncated payload is a parse error") {
    auto stub = dir / "cut-images-idx3-ubyte";
    fs::copy_file(dir / "train-images-idx3-ubyte", stub);
    fs::resize_file(stub, 4000);
    spec.path = stub.string();
    spec.labels_path = (dir / "train-labels-idx1-ubyte").string();
    CHECK_THROWS_AS(load_dataset(spec), format_error);
  }
}

TEST_CASE("image folder with class subdirectories") {
  auto dir = temp_dir("folder");
  const char* classes[3] = {"cat", "dog", "fox"};
  for (int k = 0; k < 3; ++k) {
    fs::create_directories(dir / classes[k]);
    for (int i = 0; i < 2; ++i) {
      std::ofstream out(dir / classes[k] / ("img" + std::to_string(i) + ".pgm"),
                        std::ios::binary);
      out << "P5\n# test image\n4 3\n255\n";
      for (int p = 0; p < 12; ++p) {
        const unsigned char byte = (unsigned char)(k * 40 + i * 10 + p);
        out.write(reinterpret_cast<const char*>(&byte), 1);
      }
    }
  }
  DatasetSpec spec;
  spec.source = DataSource::image_folder;
  spec.path = dir.string();
  auto data = load_dataset(spec);
  CHECK(data.size() == 6);
  CHECK(data.class_names == std::vector<std::string>{"cat", "dog", "fox"});
  CHECK(data.labels == std::vector<int>{0, 0, 1, 1, 2, 2});
  CHECK(data.height == 3);
  CHECK(data.width == 4);

  SUBCASE("color ppm is stored channel-major") {
    auto cdir = temp_dir("folder_color");
    fs::create_directories(cdir / "only");
    std::ofstream out(cdir / "only" / "img.ppm", std::ios::binary);
    out << "P6\n2 1\n255\n";
    const unsigned char px[6] = {255, 0, 0, 0, 255, 0};  // red, green
    out.write(reinterpret_cast<const char*>(px), 6);
    out.close();
    spec.path = cdir.string();
    auto color = load_dataset(spec);
    CHECK(color.channels == 3);
    CHECK(color.features(0, 0) == doctest::Approx(1.0f));  // R plane: [1, 0]
    CHECK(color.features(0, 1) == doctest::Approx(0.0f));
    CHECK(color.features(0, 3) == doctest::Approx(1.0f));  // G plane: [0, 1]
  }
  SUBCASE("empty folder is rejected") {
    auto empty = temp_dir("folder_empty");
    spec.path = empty.string();
    CHECK_THROWS_AS(load_dataset(spec), std::invalid_argument);
  }
}

TEST_CASE("pair batches") {
  DatasetSpec spec;
  spec.samples = 64;
  spec.classes = 4;
  spec.dim = 8;
  auto data = load_dataset(spec);

  SUBCASE("identity policy copies anchors into views") {
    auto batch = make_pair_batch(data, AugmentationPolicy::identity(), 16, uint64_t(5));
    CHECK(batch.size() == 16);
    CHECK((batch.anchors - batch.views).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("zero-scale noise is the identity") {
    AugmentationPolicy policy;
    policy.transforms = {{TransformKind::gaussian_noise, 0.0}};
    auto batch = make_pair_batch(data, policy, 16, uint64_t(5));
    CHECK((batch.anchors - batch.views).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("same seed reproduces the batch bitwise") {
    auto policy = AugmentationPolicy::preset("vector-default");
    auto one = make_pair_batch(data, policy, 16, uint64_t(9));
    auto two = make_pair_batch(data, policy, 16, uint64_t(9));
    CHECK(one.indices == two.indices);
    CHECK((one.views - two.views).cwiseAbs().maxCoeff() == 0.0f);
    auto three = make_pair_batch(data, policy, 16, uint64_t(10));
    CHECK(one.indices != three.indices);
  }
  SUBCASE("sampling is without replacement") {
    auto batch = make_pair_batch(data, AugmentationPolicy::identity(), 64, uint64_t(2));
    auto sorted = batch.indices;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }
  SUBCASE("batch larger than the dataset is rejected") {
    CHECK_THROWS_AS(make_pair_batch(data, AugmentationPolicy::identity(), 65, uint64_t(1)),
                    std::invalid_argument);
  }
  SUBCASE("labels never influence view generation") {
    auto policy = AugmentationPolicy::preset("vector-default");
    auto batch = make_pair_batch(data, policy, 16, uint64_t(4));
    Dataset relabeled = data;
    for (auto& l : relabeled.labels) l = 0;
    auto same = make_pair_batch(relabeled, policy, 16, uint64_t(4));
    CHECK((batch.views - same.views).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("image augmentations keep the declared shape and range") {
  auto data = make_digit_corpus(40, 11);
  auto policy = AugmentationPolicy::preset("grayscale-default");
  auto rng = derive_rng(3, 1);
  for (int i = 0; i < 10; ++i) {
    VecXf sample = data.features.row(i).transpose();
    VecXf view = augment_sample(data, policy, sample, rng);
    CHECK(view.size() == 784);
    CHECK(view.allFinite());
    CHECK(view.minCoeff() >= -1e-6f);
    CHECK(view.maxCoeff() <= 1.0f + 1e-6f);
    // an augmented digit should still be a digit-like blob, not blank
    CHECK(view.maxCoeff() > 0.3f);
  }

  SUBCASE("color preset runs on color data") {
    Dataset color;
    color.channels = 3;
    color.height = color.width = 8;
    color.features = MatXf::Random(4, 3 * 64).cwiseAbs();
    color.feature_std = VecXf::Ones(3 * 64);
    auto cpolicy = AugmentationPolicy::preset("color-default");
    VecXf sample = color.features.row(0).transpose();
    VecXf view = augment_sample(color, cpolicy, sample, rng);
    CHECK(view.size() == 3 * 64);
    CHECK(view.allFinite());
  }
}

TEST_CASE("digit corpus is deterministic and class-balanced") {
  auto one = make_digit_corpus(50, 21);
  auto two = make_digit_corpus(50, 21);
  CHECK((one.features - two.features).cwiseAbs().maxCoeff() == 0.0f);
  std::vector<int> counts(10, 0);
  for (int l : one.labels) counts[l] += 1;
  for (int c : counts) CHECK(c == 5);
}
