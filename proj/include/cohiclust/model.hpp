#pragma once

// Encoder g, router head pi (one sigmoid output per internal tree node) and
// contrast head phi. The router's neuron n = 2^t + i (1-based) parameterizes
// the left edge of node (t, i), which is array column n - 1 in heap order.

#include <cmath>
#include <memory>
#include <set>
#include <string>

#include "cohiclust/nn.hpp"

namespace cohiclust {

struct EncoderSpec {
  std::string arch = "mlp-small";
  int input_dim = 0;  // flat vector data; 0 when an image shape is given
  int channels = 0, height = 0, width = 0;
  int embed_dim = 64;

  bool is_image() const { return channels > 0; }
  int flat_dim() const { return is_image() ? channels * height * width : input_dim; }
};

inline const std::set<std::string>& registered_architectures() {
  static const std::set<std::string> archs = {"mlp-small", "cnn-small", "resnet18", "resnet34",
                                              "resnet50"};
  return archs;
}

// Fills derived fields (resnet embedding width) and checks cross-field rules.
inline EncoderSpec resolve_encoder_spec(EncoderSpec spec) {
  if (!registered_architectures().count(spec.arch))
    throw std::invalid_argument("encoder.arch: unknown architecture '" + spec.arch + "'");
  if (spec.arch == "mlp-small") {
    if (spec.flat_dim() <= 0)
      throw std::invalid_argument("encoder: mlp-small needs input_dim or an image shape");
  } else {
    if (!spec.is_image())
      throw std::invalid_argument("encoder: " + spec.arch + " needs an image shape (CxHxW)");
  }
  int forced = 0;
  if (spec.arch == "resnet18" || spec.arch == "resnet34") forced = 512;
  if (spec.arch == "resnet50") forced = 2048;
  if (forced > 0) {
    if (spec.embed_dim == 0) spec.embed_dim = forced;
    if (spec.embed_dim != forced)
      throw std::invalid_argument("encoder.embed_dim: " + spec.arch + " produces " +
                                  std::to_string(forced) + "-dim embeddings, leave at 0 or set " +
                                  std::to_string(forced));
  }
  if (spec.embed_dim < 1) throw std::invalid_argument("encoder.embed_dim must be >= 1");
  return spec;
}

namespace detail {

template <class S>
void append_resnet_stage(Sequential<S>& net, std::string name, ConvShape& shape, int out_channels,
                         int blocks, int stride, bool bottleneck, std::mt19937_64& rng) {
  for (int b = 0; b < blocks; ++b) {
    auto* blk = net.template emplace<ResidualBlock<S>>(name + "." + std::to_string(b), shape,
                                                       out_channels, b == 0 ? stride : 1,
                                                       bottleneck, rng);
    shape = blk->out_shape();
  }
}

template <class S>
std::unique_ptr<Sequential<S>> build_resnet(const EncoderSpec& spec, int stage_blocks[4],
                                            bool bottleneck, std::mt19937_64& rng) {
  auto net = std::make_unique<Sequential<S>>();
  ConvShape shape{spec.channels, spec.height, spec.width};
  auto* stem = net->template emplace<Conv2d<S>>("stem", shape, 64, 7, 2, 3, rng);
  shape = stem->out_shape();
  net->template emplace<BatchNorm2d<S>>("stem.bn", shape);
  net->template emplace<ReLU<S>>();
  auto* pool = net->template emplace<MaxPool2d<S>>(shape, 3, 2, 1);
  shape = pool->out_shape();
  const int widths[4] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    const int out = bottleneck ? widths[stage] * 4 : widths[stage];
    if (shape.height < 1 || shape.width < 1)
      throw std::invalid_argument("encoder: image too small for " + spec.arch);
    append_resnet_stage(*net, "s" + std::to_string(stage), shape, out, stage_blocks[stage],
                        stage == 0 ? 1 : 2, bottleneck, rng);
  }
  net->template emplace<GlobalAvgPool<S>>(shape);
  return net;
}

}  // namespace detail

// Encoder factory for the registered architecture tags.
template <class S>
std::unique_ptr<Sequential<S>> build_encoder(const EncoderSpec& raw_spec, std::mt19937_64& rng) {
  const EncoderSpec spec = resolve_encoder_spec(raw_spec);
  auto net = std::make_unique<Sequential<S>>();
  if (spec.arch == "mlp-small") {
    net->template emplace<Dense<S>>("enc.fc1", spec.flat_dim(), 128, rng);
    net->template emplace<ReLU<S>>();
    net->template emplace<Dense<S>>("enc.fc2", 128, 128, rng);
    net->template emplace<ReLU<S>>();
    net->template emplace<Dense<S>>("enc.fc3", 128, spec.embed_dim, rng);
    return net;
  }
  if (spec.arch == "cnn-small") {
    ConvShape shape{spec.channels, spec.height, spec.width};
    const int widths[3] = {8, 16, 32};
    for (int block = 0; block < 3; ++block) {
      auto* conv = net->template emplace<Conv2d<S>>("enc.conv" + std::to_string(block + 1), shape,
                                                    widths[block], 3, 1, 1, rng);
      shape = conv->out_shape();
      net->template emplace<ReLU<S>>();
      if (shape.height >= 2 && shape.width >= 2) {
        auto* pool = net->template emplace<MaxPool2d<S>>(shape, 2, 2);
        shape = pool->out_shape();
      }
    }
    net->template emplace<Dense<S>>("enc.fc", shape.size(), spec.embed_dim, rng);
    return net;
  }
  int blocks18[4] = {2, 2, 2, 2};
  int blocks34[4] = {3, 4, 6, 3};
  if (spec.arch == "resnet18") return detail::build_resnet<S>(spec, blocks18, false, rng);
  if (spec.arch == "resnet34") return detail::build_resnet<S>(spec, blocks34, false, rng);
  return detail::build_resnet<S>(spec, blocks34, true, rng);  // resnet50
}

// Single linear layer with one sigmoid output per internal node. Logits are
// clamped so probabilities never reach exact 0/1 (square roots and logs
// downstream stay finite).
template <class S>
class RouterHead {
 public:
  static constexpr double kLogitClamp = 15.0;

  RouterHead(int embed_dim, int num_internal, std::mt19937_64& rng)
      : linear_("router", embed_dim, num_internal,rng, 1.0 / std::sqrt(double(embed_dim))),
        embed_dim_(embed_dim),
        num_internal_(num_internal) {}

  int num_internal() const { return num_internal_; }
  int embed_dim() const { return embed_dim_; }

  MatX<S> forward(const MatX<S>& z) {
    if (z.cols() != embed_dim_)
      throw std::invalid_argument("route: embedding dim " + std::to_string(z.cols()) +
                                  ", router expects " + std::to_string(embed_dim_));
    MatX<S> logits = linear_.forward(z, true);
    pass_ = (logits.array().abs() < S(kLogitClamp)).template cast<S>();
    logits = logits.array().min(S(kLogitClamp)).max(S(-kLogitClamp));
    probs_ = ((-logits.array()).exp() + S(1)).inverse();
    return probs_;
  }

  MatX<S> backward(const MatX<S>& grad_probs) {
    MatX<S> glogits = grad_probs.array() * probs_.array() * (S(1) - probs_.array()) * pass_.array();
    return linear_.backward(glogits);
  }

  Dense<S>& linear() { return linear_; }
  void collect_params(std::vector<Param<S>*>& out) { linear_.collect_params(out); }

 private:
  Dense<S> linear_;
  int embed_dim_, num_internal_;
  MatX<S> probs_, pass_;
};

enum class ContrastMode { identity, two_layer };

inline ContrastMode contrast_mode_from_string(const std::string& s) {
  if (s == "identity") return ContrastMode::identity;
  if (s == "two-layer") return ContrastMode::two_layer;
  throw std::invalid_argument("contrast.mode: expected 'identity' or 'two-layer', got '" + s + "'");
}

inline std::string to_string(ContrastMode m) {
  return m == ContrastMode::identity ? "identity" : "two-layer";
}

// phi: embeddings -> contrast space. Identity keeps M = N; the two-layer form
// is Dense(N -> N) / ReLU / Dense(N -> M).
template <class S>
class ContrastHead {
 public:
  ContrastHead(ContrastMode mode, int embed_dim, int out_dim, std::mt19937_64& rng)
      : mode_(mode), embed_dim_(embed_dim), out_dim_(out_dim) {
    if (mode == ContrastMode::identity) {
      if (out_dim != embed_dim)
        throw std::invalid_argument("contrast: identity head requires output_dim == embed_dim (" +
                                    std::to_string(out_dim) + " != " + std::to_string(embed_dim) +
                                    ")");
    } else {
      net_.template emplace<Dense<S>>("phi.fc1", embed_dim, embed_dim, rng);
      net_.template emplace<ReLU<S>>();
      net_.template emplace<Dense<S>>("phi.fc2", embed_dim, out_dim, rng);
    }
  }

  ContrastMode mode() const { return mode_; }
  int out_dim() const { return out_dim_; }

  MatX<S> forward(const MatX<S>& z, bool train) {
    if (z.cols() != embed_dim_)
      throw std::invalid_argument("contrast_embed: embedding dim mismatch");
    return mode_ == ContrastMode::identity ? z : net_.forward(z, train);
  }

  MatX<S> backward(const MatX<S>& gy) {
    return mode_ == ContrastMode::identity ? gy : net_.backward(gy);
  }

  void collect_params(std::vector<Param<S>*>& out) {
    if (mode_ == ContrastMode::two_layer) net_.collect_params(out);
  }
  void collect_state(std::vector<MatX<S>*>& out) {
    if (mode_ == ContrastMode::two_layer) net_.collect_state(out);
  }

 private:
  ContrastMode mode_;
  int embed_dim_, out_dim_;
  Sequential<S> net_;
};

// The trainable bundle: g, pi, phi for a fixed tree depth.
template <class S>
struct CoHiModel {
  EncoderSpec spec;
  int tree_depth = 1;
  std::unique_ptr<Sequential<S>> encoder;
  std::unique_ptr<RouterHead<S>> router;
  std::unique_ptr<ContrastHead<S>> contrast;

  static CoHiModel build(const EncoderSpec& raw_spec, int tree_depth, ContrastMode contrast_mode,
                         int contrast_dim, uint64_t seed) {
    if (tree_depth < 1) throw std::invalid_argument("tree depth must be >= 1");
    CoHiModel m;
    m.spec = resolve_encoder_spec(raw_spec);
    m.tree_depth = tree_depth;
    auto enc_rng = derive_rng(seed, 'e');
    m.encoder = build_encoder<S>(m.spec, enc_rng);
    auto router_rng = derive_rng(seed, 'r');
    m.router = std::make_unique<RouterHead<S>>(m.spec.embed_dim, (1 << tree_depth) - 1, router_rng);
    auto phi_rng = derive_rng(seed, 'p');
    const int cdim = contrast_dim > 0 ? contrast_dim : m.spec.embed_dim;
    m.contrast = std::make_unique<ContrastHead<S>>(contrast_mode, m.spec.embed_dim, cdim, phi_rng);
    return m;
  }

  MatX<S> encode(const MatX<S>& batch, bool train) {
    if (batch.cols() != spec.flat_dim())
      throw std::invalid_argument("encode: input dim " + std::to_string(batch.cols()) +
                                  ", encoder expects " + std::to_string(spec.flat_dim()));
    MatX<S> z = encoder->forward(batch, train);
    if (!z.allFinite()) throw numeric_error("encode: non-finite embeddings");
    return z;
  }

  MatX<S> route(const MatX<S>& z) { return router->forward(z); }

  MatX<S> contrast_embed(const MatX<S>& z, bool train) { return contrast->forward(z, train); }

  std::vector<Param<S>*> encoder_params() {
    std::vector<Param<S>*> out;
    encoder->collect_params(out);
    return out;
  }
  std::vector<Param<S>*> pretrain_params() {
    std::vector<Param<S>*> out;
    encoder->collect_params(out);
    contrast->collect_params(out);
    return out;
  }
  std::vector<Param<S>*> all_params() {
    std::vector<Param<S>*> out;
    encoder->collect_params(out);
    router->collect_params(out);
    contrast->collect_params(out);
    return out;
  }
  std::vector<MatX<S>*> state_buffers() {
    std::vector<MatX<S>*> out;
    encoder->collect_state(out);
    contrast->collect_state(out);
    return out;
  }
};

}  // namespace cohiclust
