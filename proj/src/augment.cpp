#include <algorithm>
#include <cmath>

#include "cohiclust/data.hpp"

namespace cohiclust {

AugmentationPolicy AugmentationPolicy::identity() { return AugmentationPolicy{}; }

AugmentationPolicy AugmentationPolicy::preset(const std::string& name) {
  AugmentationPolicy policy;
  policy.name = name;
  if (name == "identity") return policy;
  if (name == "vector-default") {
    policy.transforms = {{TransformKind::gaussian_noise, 0.1}};
    return policy;
  }
  if (name == "grayscale-default") {
    policy.transforms = {{TransformKind::crop_resize, 0.8, 1.0},
                         {TransformKind::rotate, 15.0}};
    return policy;
  }
  if (name == "color-default") {
    // SimCLR family
    policy.transforms = {{TransformKind::crop_resize, 0.5, 1.0},
                         {TransformKind::hflip, 0.5},
                         {TransformKind::color_jitter, 0.4, 0.4, 0.4},
                         {TransformKind::random_grayscale, 0.2}};
    return policy;
  }
  throw std::invalid_argument("augmentation: unknown preset '" + name + "'");
}

AugmentationPolicy AugmentationPolicy::default_for(const Dataset& data) {
  if (!data.is_image()) return preset("vector-default");
  return preset(data.channels == 1 ? "grayscale-default" : "color-default");
}

namespace {

float bilinear(const float* plane, int height, int width, double y, double x) {
  if (y < 0 || x < 0 || y > height - 1 || x > width - 1) return 0.0f;
  const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const int y1 = std::min(y0 + 1, height - 1), x1 = std::min(x0 + 1, width - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = plane[y0 * width + x0] * (1 - fx) + plane[y0 * width + x1] * fx;
  const double bottom = plane[y1 * width + x0] * (1 - fx) + plane[y1 * width + x1] * fx;
  return float(top * (1 - fy) + bottom * fy);
}

void apply_crop_resize(VecXf& img, int channels, int height, int width, double min_scale,
                       double max_scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> scale_dist(min_scale, max_scale);
  const double scale = scale_dist(rng);
  const int crop_h = std::max(1, int(std::lround(height * scale)));
  const int crop_w = std::max(1, int(std::lround(width * scale)));
  std::uniform_int_distribution<int> oy_dist(0, height - crop_h), ox_dist(0, width - crop_w);
  const int oy = oy_dist(rng), ox = ox_dist(rng);
  VecXf out(img.size());
  for (int c = 0; c < channels; ++c) {
    const float* plane = img.data() + size_t(c) * height * width;
    float* dst = out.data() + size_t(c) * height * width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double sy = oy + (crop_h - 1) * (height > 1 ? double(y) / (height - 1) : 0.0);
        const double sx = ox + (crop_w - 1) * (width > 1 ? double(x) / (width - 1) : 0.0);
        dst[y * width + x] = bilinear(plane, height, width, sy, sx);
      }
  }
  img = out;
}

void apply_rotate(VecXf& img, int channels, int height, int width, double max_degrees,
                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle_dist(-max_degrees, max_degrees);
  const double theta = angle_dist(rng) * M_PI / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
  VecXf out(img.size());
  for (int c = 0; c < channels; ++c) {
    const float* plane = img.data() + size_t(c) * height * width;
    float* dst = out.data() + size_t(c) * height * width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = y - cy, dx = x - cx;
        const double sy = cy + cos_t * dy - sin_t * dx;
        const double sx = cx + sin_t * dy + cos_t * dx;
        dst[y * width + x] = bilinear(plane, height, width, sy, sx);
      }
  }
  img = out;
}

void apply_hflip(VecXf& img, int channels, int height, int width, double prob,
                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) >= prob) return;
  for (int c = 0; c < channels; ++c) {
    float* plane = img.data() + size_t(c) * height * width;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width / 2; ++x)
        std::swap(plane[y * width + x], plane[y * width + (width - 1 - x)]);
  }
}

void apply_color_jitter(VecXf& img, int channels, int height, int width, double brightness,
                        double contrast, double saturation, std::mt19937_64& rng) {
  auto factor = [&](double strength) {
    std::uniform_real_distribution<double> dist(std::max(0.0, 1.0 - strength), 1.0 + strength);
    return float(dist(rng));
  };
  const float fb = factor(brightness);
  const float fc = factor(contrast);
  const float fs = factor(saturation);
  const int hw = height * width;

  img *= fb;
  const float mean = img.mean();
  img = ((img.array() - mean) * fc + mean).matrix();
  if (channels == 3) {
    for (int p = 0; p < hw; ++p) {
      const float gray =
          (img[p] + img[hw + p] + img[2 * hw + p]) / 3.0f;
      for (int c = 0; c < 3; ++c) {
        float& v = img[c * hw + p];
        v = gray + (v - gray) * fs;
      }
    }
  }
  img = img.cwiseMax(0.0f).cwiseMin(1.0f);
}

void apply_grayscale(VecXf& img, int channels, int height, int width, double prob,
                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (channels != 3 || coin(rng) >= prob) return;
  const int hw = height * width;
  for (int p = 0; p < hw; ++p) {
    const float gray = (img[p] + img[hw + p] + img[2 * hw + p]) / 3.0f;
    img[p] = img[hw + p] = img[2 * hw + p] = gray;
  }
}

}  // namespace

VecXf augment_sample(const Dataset& data, const AugmentationPolicy& policy, const VecXf& sample,
                     std::mt19937_64& rng) {
  VecXf out = sample;
  for (const Transform& t : policy.transforms) {
    switch (t.kind) {
      case TransformKind::gaussian_noise: {
        std::normal_distribution<double> unit(0.0, 1.0);
        for (int d = 0; d < out.size(); ++d)
          out[d] += float(t.a) * data.feature_std[d] * float(unit(rng));
        break;
      }
      case TransformKind::crop_resize:
        if (data.is_image())
          apply_crop_resize(out, data.channels, data.height, data.width, t.a, t.b, rng);
        break;
      case TransformKind::rotate:
        if (data.is_image()) apply_rotate(out, data.channels, data.height, data.width, t.a, rng);
        break;
      case TransformKind::hflip:
        if (data.is_image()) apply_hflip(out, data.channels, data.height, data.width, t.a, rng);
        break;
      case TransformKind::color_jitter:
        if (data.is_image())
          apply_color_jitter(out, data.channels, data.height, data.width, t.a, t.b, t.c, rng);
        break;
      case TransformKind::random_grayscale:
        if (data.is_image()) apply_grayscale(out, data.channels, data.height, data.width, t.a, rng);
        break;
    }
  }
  return out;
}

}  // namespace cohiclust
