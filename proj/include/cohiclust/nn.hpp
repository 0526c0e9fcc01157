#pragma once

// Minimal feed-forward stack with hand-derived backward passes. Batches are
// row-per-sample matrices; image tensors are flattened channel-major
// (index = c*H*W + y*W + x). Templated on the floating scalar so the same
// code runs in float for training throughput and in double for gradient
// verification.

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cohiclust/common.hpp"

namespace cohiclust {

template <class S>
struct Param {
  std::string name;
  MatX<S> value;
  MatX<S> grad;
  MatX<S> m, v;  // Adam moments, sized on first step
  long steps = 0;

  explicit Param(std::string n, MatX<S> val) : name(std::move(n)), value(std::move(val)) {
    grad = MatX<S>::Zero(value.rows(), value.cols());
  }
};

template <class S>
class Layer {
 public:
  virtual ~Layer() = default;
  // `train` selects batch statistics vs running statistics (batch norm).
  virtual MatX<S> forward(const MatX<S>& x, bool train) = 0;
  // Consumes the cache left by the last forward; accumulates into param grads.
  virtual MatX<S> backward(const MatX<S>& grad_out) = 0;
  virtual void collect_params(std::vector<Param<S>*>&) {}
  // Non-trainable buffers that belong in a checkpoint (running statistics).
  virtual void collect_state(std::vector<MatX<S>*>&) {}
};

namespace init {

template <class S>
MatX<S> he_normal(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  MatX<S> w(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) w(r, c) = S(dist(rng));
  return w;
}

template <class S>
MatX<S> scaled_normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  MatX<S> w(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) w(r, c) = S(dist(rng));
  return w;
}

}  // namespace init

template <class S>
class Dense : public Layer<S> {
 public:
  Dense(std::string name, int in_dim, int out_dim, std::mt19937_64& rng, double init_scale = -1)
      : weight_(name + ".w", init_scale < 0
                                ? init::he_normal<S>(out_dim, in_dim, in_dim, rng)
                                : init::scaled_normal<S>(out_dim, in_dim, init_scale, rng)),
        bias_(name + ".b", MatX<S>::Zero(1, out_dim)) {}

  MatX<S> forward(const MatX<S>& x, bool) override {
    if (x.cols() != weight_.value.cols())
      throw std::invalid_argument("dense " + weight_.name + ": input dim " +
                                  std::to_string(x.cols()) + ", expected " +
                                  std::to_string(weight_.value.cols()));
    input_ = x;
    MatX<S> y = x * weight_.value.transpose();
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  MatX<S> backward(const MatX<S>& gy) override {
    weight_.grad.noalias() += gy.transpose() * input_;
    bias_.grad.row(0) += gy.colwise().sum();
    return gy * weight_.value;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Param<S>& weight() { return weight_; }
  Param<S>& bias() { return bias_; }

 private:
  Param<S> weight_;  // out x in
  Param<S> bias_;    // 1 x out
  MatX<S> input_;
};

template <class S>
class ReLU : public Layer<S> {
 public:
  MatX<S> forward(const MatX<S>& x, bool) override {
    mask_ = (x.array() > S(0)).template cast<S>();
    return x.cwiseProduct(mask_);
  }
  MatX<S> backward(const MatX<S>& gy) override { return gy.cwiseProduct(mask_); }

 private:
  MatX<S> mask_;
};

struct ConvShape {
  int channels = 1, height = 1, width = 1;
  int size() const { return channels * height * width; }
};

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <class S>
class Conv2d : public Layer<S> {
 public:
  Conv2d(std::string name, ConvShape in, int out_channels, int kernel, int stride, int pad,
         std::mt19937_64& rng)
      : in_(in),
        out_channels_(out_channels),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        out_h_(conv_out_extent(in.height, kernel, stride, pad)),
        out_w_(conv_out_extent(in.width, kernel, stride, pad)),
        weight_(name + ".w", init::he_normal<S>(out_channels, in.channels * kernel * kernel,
                                                in.channels * kernel * kernel, rng)),
        bias_(name + ".b", MatX<S>::Zero(1, out_channels)) {}

  ConvShape out_shape() const { return {out_channels_, out_h_, out_w_}; }

  MatX<S> forward(const MatX<S>& x, bool) override {
    if (x.cols() != in_.size())
      throw std::invalid_argument("conv " + weight_.name + ": input size mismatch");
    input_ = x;
    const int batch = int(x.rows());
    MatX<S> y(batch, out_channels_ * out_h_ * out_w_);
    const int per_sample = out_h_ * out_w_;
    for (int start = 0; start < batch; start += kChunk) {
      const int n = std::min(kChunk, batch - start);
      MatX<S> patches = im2col(x, start, n);
      MatX<S> prod = weight_.value * patches;  // OC x (n*OH*OW)
      for (int s = 0; s < n; ++s)
        for (int oc = 0; oc < out_channels_; ++oc)
          y.row(start + s).segment(oc * per_sample, per_sample) =
              prod.row(oc).segment(s * per_sample, per_sample).array() + bias_.value(0, oc);
    }
    return y;
  }

  MatX<S> backward(const MatX<S>& gy) override {
    const int batch = int(gy.rows());
    const int per_sample = out_h_ * out_w_;
    MatX<S> gx = MatX<S>::Zero(batch, in_.size());
    for (int start = 0; start < batch; start += kChunk) {
      const int n = std::min(kChunk, batch - start);
      MatX<S> g(out_channels_, n * per_sample);
      for (int s = 0; s < n; ++s)
        for (int oc = 0; oc < out_channels_; ++oc)
          g.row(oc).segment(s * per_sample, per_sample) =
              gy.row(start + s).segment(oc * per_sample, per_sample);
      MatX<S> patches = im2col(input_, start, n);
      weight_.grad.noalias() += g * patches.transpose();
      bias_.grad.row(0) += g.rowwise().sum().transpose();
      MatX<S> gpatches = weight_.value.transpose() * g;
      col2im_add(gpatches, gx, start, n);
    }
    return gx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  static constexpr int kChunk = 64;

  MatX<S> im2col(const MatX<S>& x, int first_sample, int n) const {
    const int rows = in_.channels * kernel_ * kernel_;
    MatX<S> patches(rows, n * out_h_ * out_w_);
    for (int s = 0; s < n; ++s) {
      const auto row = x.row(first_sample + s);
      for (int oy = 0; oy < out_h_; ++oy) {
        for (int ox = 0; ox < out_w_; ++ox) {
          const int col = (s * out_h_ + oy) * out_w_ + ox;
          int r = 0;
          for (int c = 0; c < in_.channels; ++c) {
            const int base = c * in_.height * in_.width;
            for (int ky = 0; ky < kernel_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              for (int kx = 0; kx < kernel_; ++kx, ++r) {
                const int ix = ox * stride_ - pad_ + kx;
                patches(r, col) = (iy >= 0 && iy < in_.height && ix >= 0 && ix < in_.width)
                                      ? row(base + iy * in_.width + ix)
                                      : S(0);
              }
            }
          }
        }
      }
    }
    return patches;
  }

  void col2im_add(const MatX<S>& gpatches, MatX<S>& gx, int first_sample, int n) const {
    for (int s = 0; s < n; ++s) {
      auto grow = gx.row(first_sample + s);
      for (int oy = 0; oy < out_h_; ++oy) {
        for (int ox = 0; ox < out_w_; ++ox) {
          const int col = (s * out_h_ + oy) * out_w_ + ox;
          int r = 0;
          for (int c = 0; c < in_.channels; ++c) {
            const int base = c * in_.height * in_.width;
            for (int ky = 0; ky < kernel_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              for (int kx = 0; kx < kernel_; ++kx, ++r) {
                const int ix = ox * stride_ - pad_ + kx;
                if (iy >= 0 && iy < in_.height && ix >= 0 && ix < in_.width)
                  grow(base + iy * in_.width + ix) += gpatches(r, col);
              }
            }
          }
        }
      }
    }
  }

  ConvShape in_;
  int out_channels_, kernel_, stride_, pad_;
  int out_h_, out_w_;
  Param<S> weight_;  // OC x (C*kh*kw)
  Param<S> bias_;
  MatX<S> input_;
};

template <class S>
class MaxPool2d : public Layer<S> {
 public:
  MaxPool2d(ConvShape in, int kernel, int stride, int pad = 0)
      : in_(in),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        out_h_(conv_out_extent(in.height, kernel, stride, pad)),
        out_w_(conv_out_extent(in.width, kernel, stride, pad)) {}

  ConvShape out_shape() const { return {in_.channels, out_h_, out_w_}; }

  MatX<S> forward(const MatX<S>& x, bool) override {
    const int batch = int(x.rows());
    MatX<S> y(batch, in_.channels * out_h_ * out_w_);
    argmax_.resize(batch, y.cols());
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < in_.channels; ++c) {
        const int base = c * in_.height * in_.width;
        for (int oy = 0; oy < out_h_; ++oy) {
          for (int ox = 0; ox < out_w_; ++ox) {
            S best = std::numeric_limits<S>::lowest();
            int best_idx = -1;
            for (int ky = 0; ky < kernel_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= in_.height) continue;
              for (int kx = 0; kx < kernel_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= in_.width) continue;
                const S v = x(b, base + iy * in_.width + ix);
                if (v > best) {
                  best = v;
                  best_idx = base + iy * in_.width + ix;
                }
              }
            }
            const int out_idx = c * out_h_ * out_w_ + oy * out_w_ + ox;
            y(b, out_idx) = best;
            argmax_(b, out_idx) = best_idx;
          }
        }
      }
    }
    return y;
  }

  MatX<S> backward(const MatX<S>& gy) override {
    MatX<S> gx = MatX<S>::Zero(gy.rows(), in_.size());
    for (int b = 0; b < gy.rows(); ++b)
      for (int o = 0; o < gy.cols(); ++o) gx(b, argmax_(b, o)) += gy(b, o);
    return gx;
  }

 private:
  ConvShape in_;
  int kernel_, stride_, pad_;
  int out_h_, out_w_;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> argmax_;
};

template <class S>
class GlobalAvgPool : public Layer<S> {
 public:
  explicit GlobalAvgPool(ConvShape in) : in_(in) {}

  MatX<S> forward(const MatX<S>& x, bool) override {
    const int hw = in_.height * in_.width;
    MatX<S> y(x.rows(), in_.channels);
    for (int c = 0; c < in_.channels; ++c)
      y.col(c) = x.middleCols(c * hw, hw).rowwise().mean();
    return y;
  }

  MatX<S> backward(const MatX<S>& gy) override {
    const int hw = in_.height * in_.width;
    MatX<S> gx(gy.rows(), in_.size());
    for (int c = 0; c < in_.channels; ++c)
      gx.middleCols(c * hw, hw) = (gy.col(c) / S(hw)).replicate(1, hw);
    return gx;
  }

 private:
  ConvShape in_;
};

// Per-channel batch normalization over (batch, spatial) positions.
template <class S>
class BatchNorm2d : public Layer<S> {
 public:
  BatchNorm2d(std::string name, ConvShape in, double momentum = 0.1, double eps = 1e-5)
      : in_(in),
        momentum_(momentum),
        eps_(eps),
        gamma_(name + ".gamma", MatX<S>::Ones(1, in.channels)),
        beta_(name + ".beta", MatX<S>::Zero(1, in.channels)),
        running_mean_(MatX<S>::Zero(1, in.channels)),
        running_var_(MatX<S>::Ones(1, in.channels)) {}

  MatX<S> forward(const MatX<S>& x, bool train) override {
    const int hw = in_.height * in_.width;
    const int batch = int(x.rows());
    const double count = double(batch) * hw;
    MatX<S> y(batch, x.cols());
    xhat_.resize(batch, x.cols());
    inv_std_.resize(in_.channels);
    count_ = count;
    for (int c = 0; c < in_.channels; ++c) {
      auto block = x.middleCols(c * hw, hw);
      S mean, var;
      if (train) {
        mean = block.sum() / S(count);
        var = (block.array() - mean).square().sum() / S(count);
        running_mean_(0, c) = S((1 - momentum_) * running_mean_(0, c) + momentum_ * mean);
        const double unbiased = count > 1 ? double(var) * count / (count - 1) : double(var);
        running_var_(0, c) = S((1 - momentum_) * running_var_(0, c) + momentum_ * unbiased);
      } else {
        mean = running_mean_(0, c);
        var = running_var_(0, c);
      }
      const S inv_std = S(1.0 / std::sqrt(double(var) + eps_));
      inv_std_[c] = inv_std;
      xhat_.middleCols(c * hw, hw) = (block.array() - mean) * inv_std;
      y.middleCols(c * hw, hw) =
          xhat_.middleCols(c * hw, hw).array() * gamma_.value(0, c) + beta_.value(0, c);
    }
    train_mode_ = train;
    return y;
  }

  MatX<S> backward(const MatX<S>& gy) override {
    const int hw = in_.height * in_.width;
    MatX<S> gx(gy.rows(), gy.cols());
    for (int c = 0; c < in_.channels; ++c) {
      auto g = gy.middleCols(c * hw, hw);
      auto xh = xhat_.middleCols(c * hw, hw);
      gamma_.grad(0, c) += g.cwiseProduct(xh).sum();
      beta_.grad(0, c) += g.sum();
      if (train_mode_) {
        const S g_mean = g.sum() / S(count_);
        const S gxh_mean = g.cwiseProduct(xh).sum() / S(count_);
        gx.middleCols(c * hw, hw) =
            (g.array() - g_mean - xh.array() * gxh_mean) * gamma_.value(0, c) * inv_std_[c];
      } else {
        gx.middleCols(c * hw, hw) = g.array() * gamma_.value(0, c) * inv_std_[c];
      }
    }
    return gx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_state(std::vector<MatX<S>*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  ConvShape in_;
  double momentum_, eps_;
  Param<S> gamma_, beta_;
  MatX<S> running_mean_, running_var_;
  MatX<S> xhat_;
  std::vector<S> inv_std_;
  double count_ = 1;
  bool train_mode_ = true;
};

template <class S>
class Sequential : public Layer<S> {
 public:
  Sequential() = default;

  template <class L, class... Args>
  L* emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  void append(std::unique_ptr<Layer<S>> layer) { layers_.push_back(std::move(layer)); }

  MatX<S> forward(const MatX<S>& x, bool train) override {
    MatX<S> h = x;
    for (auto& layer : layers_) h = layer->forward(h, train);
    return h;
  }

  MatX<S> backward(const MatX<S>& gy) override {
    MatX<S> g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    for (auto& layer : layers_) layer->collect_params(out);
  }
  void collect_state(std::vector<MatX<S>*>& out) override {
    for (auto& layer : layers_) layer->collect_state(out);
  }

  size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// Residual block, both the basic (two 3x3) and bottleneck (1x1-3x3-1x1) form.
template <class S>
class ResidualBlock : public Layer<S> {
 public:
  ResidualBlock(std::string name, ConvShape in, int out_channels, int stride, bool bottleneck,
                std::mt19937_64& rng) {
    ConvShape shape = in;
    if (!bottleneck) {
      auto* c1 = main_.template emplace<Conv2d<S>>(name + ".c1", shape, out_channels, 3, stride, 1, rng);
      shape = c1->out_shape();
      main_.template emplace<BatchNorm2d<S>>(name + ".bn1", shape);
      main_.template emplace<ReLU<S>>();
      auto* c2 = main_.template emplace<Conv2d<S>>(name + ".c2", shape, out_channels, 3, 1, 1, rng);
      shape = c2->out_shape();
      main_.template emplace<BatchNorm2d<S>>(name + ".bn2", shape);
      out_shape_ = shape;
    } else {
      const int mid = out_channels / 4;
      auto* c1 = main_.template emplace<Conv2d<S>>(name + ".c1", shape, mid, 1, 1, 0, rng);
      shape = c1->out_shape();
      main_.template emplace<BatchNorm2d<S>>(name + ".bn1", shape);
      main_.template emplace<ReLU<S>>();
      auto* c2 = main_.template emplace<Conv2d<S>>(name + ".c2", shape, mid, 3, stride, 1, rng);
      shape = c2->out_shape();
      main_.template emplace<BatchNorm2d<S>>(name + ".bn2", shape);
      main_.template emplace<ReLU<S>>();
      auto* c3 = main_.template emplace<Conv2d<S>>(name + ".c3", shape, out_channels, 1, 1, 0, rng);
      shape = c3->out_shape();
      main_.template emplace<BatchNorm2d<S>>(name + ".bn3", shape);
      out_shape_ = shape;
    }
    if (stride != 1 || in.channels != out_channels) {
      auto* cd = skip_.template emplace<Conv2d<S>>(name + ".down", in, out_channels, 1, stride, 0, rng);
      skip_.template emplace<BatchNorm2d<S>>(name + ".bnd", cd->out_shape());
      has_skip_ = true;
    }
  }

  ConvShape out_shape() const { return out_shape_; }

  MatX<S> forward(const MatX<S>& x, bool train) override {
    MatX<S> main = main_.forward(x, train);
    MatX<S> skip = has_skip_ ? skip_.forward(x, train) : x;
    MatX<S> sum = main + skip;
    relu_mask_ = (sum.array() > S(0)).template cast<S>();
    return sum.cwiseProduct(relu_mask_);
  }

  MatX<S> backward(const MatX<S>& gy) override {
    MatX<S> g = gy.cwiseProduct(relu_mask_);
    MatX<S> gx = main_.backward(g);
    if (has_skip_)
      gx += skip_.backward(g);
    else
      gx += g;
    return gx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    main_.collect_params(out);
    skip_.collect_params(out);
  }
  void collect_state(std::vector<MatX<S>*>& out) override {
    main_.collect_state(out);
    skip_.collect_state(out);
  }

 private:
  Sequential<S> main_;
  Sequential<S> skip_;
  bool has_skip_ = false;
  ConvShape out_shape_;
  MatX<S> relu_mask_;
};

template <class S>
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void step(const std::vector<Param<S>*>& params) {
    for (Param<S>* p : params) {
      if (p->m.size() == 0) {
        p->m = MatX<S>::Zero(p->value.rows(), p->value.cols());
        p->v = MatX<S>::Zero(p->value.rows(), p->value.cols());
      }
      p->steps += 1;
      MatX<S> g = p->grad;
      if (weight_decay != 0) g += S(weight_decay) * p->value;
      p->m = S(beta1) * p->m + S(1 - beta1) * g;
      p->v = S(beta2) * p->v + S(1 - beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(beta1, double(p->steps));
      const double c2 = 1.0 - std::pow(beta2, double(p->steps));
      p->value.array() -=
          S(lr) * (p->m.array() / S(c1)) /
          ((p->v.array() / S(c2)).sqrt() + S(eps));
    }
  }
};

template <class S>
void zero_grads(const std::vector<Param<S>*>& params) {
  for (Param<S>* p : params) p->grad.setZero();
}

template <class S>
long param_count(const std::vector<Param<S>*>& params) {
  long n = 0;
  for (const Param<S>* p : params) n += p->value.size();
  return n;
}

}  // namespace cohiclust
