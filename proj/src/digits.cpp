#include <array>
#include <cmath>

#include "cohiclust/data.hpp"

namespace cohiclust {

namespace {

// 5x7 bitmap font, one row string per scanline.
constexpr std::array<std::array<const char*, 7>, 10> kGlyphs = {{
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},  // 0
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},  // 1
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},  // 2
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},  // 3
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},  // 4
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},  // 5
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},  // 6
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},  // 7
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},  // 8
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},  // 9
}};

double glyph_sample(int digit, double u, double v) {
  // bilinear over the 5x7 grid; u in glyph columns, v in rows
  if (u < -0.5 || v < -0.5 || u > 4.5 || v > 6.5) return 0.0;
  const auto cell = [&](int row, int col) -> double {
    if (row < 0 || row > 6 || col < 0 || col > 4) return 0.0;
    return kGlyphs[digit][row][col] == '1' ? 1.0 : 0.0;
  };
  const int c0 = int(std::floor(u)), r0 = int(std::floor(v));
  const double fu = u - c0, fv = v - r0;
  const double top = cell(r0, c0) * (1 - fu) + cell(r0, c0 + 1) * fu;
  const double bottom = cell(r0 + 1, c0) * (1 - fu) + cell(r0 + 1, c0 + 1) * fu;
  return top * (1 - fv) + bottom * fv;
}

}  // namespace

Dataset make_digit_corpus(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("digit corpus: n must be >= 1");
  const int size = 28;
  auto rng = derive_rng(seed, 'd', 'i', 'g');
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Dataset data;
  data.channels = 1;
  data.height = data.width = size;
  data.features.resize(n, size * size);
  data.labels.resize(n);
  for (int k = 0; k < 10; ++k) data.class_names.push_back(std::to_string(k));

  for (int i = 0; i < n; ++i) {
    const int digit = i % 10;
    data.labels[i] = digit;
    const double angle = (uniform(rng) * 2 - 1) * 18.0 * M_PI / 180.0;
    const double scale = 0.75 + uniform(rng) * 0.4;
    const double shear = (uniform(rng) * 2 - 1) * 0.15;
    const double shift_y = (uniform(rng) * 2 - 1) * 3.0;
    const double shift_x = (uniform(rng) * 2 - 1) * 3.0;
    const double gamma = 0.6 + uniform(rng) * 0.8;  // stroke weight
    const double intensity = 0.75 + uniform(rng) * 0.25;
    const double cos_t = std::cos(angle), sin_t = std::sin(angle);
    // glyph cell extents in output pixels
    const double cell_h = 20.0 / 7.0 * scale;
    const double cell_w = 16.0 / 5.0 * scale;
    const double cy = (size - 1) / 2.0 + shift_y, cx = (size - 1) / 2.0 + shift_x;

    std::normal_distribution<double> noise(0.0, 0.04);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = y - cy, dx = x - cx;
        // inverse rotation, then shear, then scale into glyph coordinates
        const double ry = cos_t * dy + sin_t * dx;
        const double rx = -sin_t * dy + cos_t * dx;
        const double sx = rx - shear * ry;
        const double v = ry / cell_h + 3.0;  // glyph rows centered on 3
        const double u = sx / cell_w + 2.0;  // glyph cols centered on 2
        double value = std::pow(glyph_sample(digit, u, v), gamma) * intensity;
        value += noise(rng);
        data.features(i, y * size + x) = float(std::clamp(value, 0.0, 1.0));
      }
    }
  }

  // per-dimension std for augmentation scale (matches load_dataset's finalize)
  VecXf mean = data.features.colwise().mean();
  data.feature_std.resize(data.dim());
  for (int c = 0; c < data.dim(); ++c) {
    float acc = 0;
    for (int r = 0; r < n; ++r) {
      const float d = data.features(r, c) - mean[c];
      acc += d * d;
    }
    data.feature_std[c] = std::sqrt(acc / float(std::max(1, n - 1)));
  }
  return data;
}

}  // namespace cohiclust
