#pragma once

// Objective terms: Bhattacharyya level similarity, the contrastive
// hierarchical loss over anchor/view pairs, the R1 balance regularizer,
// NT-Xent (R2), and the beta-weighted total. Each term has a forward form
// and a fused forward+gradient form that accumulates into caller buffers.

#include <cmath>
#include <vector>

#include "cohiclust/tree.hpp"

namespace cohiclust {

enum class LevelRange { include_leaves, paper_literal };

inline LevelRange level_range_from_string(const std::string& s) {
  if (s == "include_leaves") return LevelRange::include_leaves;
  if (s == "paper_literal") return LevelRange::paper_literal;
  throw std::invalid_argument("loss.level_range: expected 'include_leaves' or 'paper_literal'");
}

inline std::string to_string(LevelRange r) {
  return r == LevelRange::include_leaves ? "include_leaves" : "paper_literal";
}

struct LossConfig {
  double beta1 = -1.0;  // < 0 resolves to 2^-T
  double beta2 = 1.0;
  double temperature = 0.5;
  LevelRange level_range = LevelRange::include_leaves;
  double epsilon = 1e-6;

  double resolved_beta1(int depth) const {
    return beta1 < 0 ? std::pow(2.0, -double(depth)) : beta1;
  }

  void validate() const {
    if (temperature <= 0) throw std::invalid_argument("loss.temperature must be > 0");
    if (epsilon <= 0 || epsilon >= 0.1)
      throw std::invalid_argument("loss.epsilon must lie in (0, 0.1)");
    if (beta1 >= 0 && !(beta1 >= 0)) throw std::invalid_argument("loss.beta1 must be >= 0");
    if (beta2 < 0) throw std::invalid_argument("loss.beta2 must be >= 0");
  }
};

struct LossBreakdown {
  double cohi = 0, r1 = 0, r2 = 0, total = 0;
};

// Levels whose similarities enter the pair score. The root term s_0 = 1 is a
// gradient-free constant; include_leaves drops it and adds the leaf level.
inline std::vector<int> similarity_levels(int depth, LevelRange range) {
  std::vector<int> levels;
  if (range == LevelRange::include_leaves)
    for (int t = 1; t <= depth; ++t) levels.push_back(t);
  else
    for (int t = 0; t < depth; ++t) levels.push_back(t);
  return levels;
}

// Bhattacharyya coefficient sum_i sqrt(P_i * Q_i).
template <class S>
S level_similarity(const VecX<S>& p, const VecX<S>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("level_similarity: length mismatch");
  if ((p.array() < S(0)).any() || (q.array() < S(0)).any())
    throw std::invalid_argument("level_similarity: negative probability");
  if (std::abs(double(p.sum()) - 1.0) > 1e-4 || std::abs(double(q.sum()) - 1.0) > 1e-4)
    throw std::invalid_argument("level_similarity: inputs must sum to 1");
  return p.cwiseProduct(q).cwiseSqrt().sum();
}

namespace detail {

template <class S>
void check_same_tree(const RoutingTensor<S>& a, const RoutingTensor<S>& b,
                     const TreeTopology& topo) {
  if (a.depth != topo.depth || b.depth != topo.depth ||
      a.edge_left.cols() != topo.num_internal() || b.edge_left.cols() != topo.num_internal())
    throw std::invalid_argument("routings do not match the topology");
}

}  // namespace detail

// s(a, b) = sum over configured levels of the Bhattacharyya coefficient
// between the two single-sample routings.
template <class S>
S pair_similarity(const RoutingTensor<S>& a, const RoutingTensor<S>& b, const TreeTopology& topo,
                  const LossConfig& cfg) {
  detail::check_same_tree(a, b, topo);
  if (a.batch() != 1 || b.batch() != 1)
    throw std::invalid_argument("pair_similarity expects single-sample routings");
  S s = 0;
  for (int t : similarity_levels(topo.depth, cfg.level_range))
    s += a.level_post[t].row(0).cwiseProduct(b.level_post[t].row(0)).cwiseSqrt().sum();
  return s;
}

// Mean cross-pair similarity minus mean positive-pair similarity. When grad
// buffers are supplied, accumulates scale * dLoss/dP_t into them (indexed by
// level, batch x 2^t, zero-initialized on demand).
template <class S>
S cohi_loss_impl(const RoutingTensor<S>& anchors, const RoutingTensor<S>& views,
                 const TreeTopology& topo, const LossConfig& cfg, S scale,
                 std::vector<MatX<S>>* grad_anchor_levels,
                 std::vector<MatX<S>>* grad_view_levels) {
  detail::check_same_tree(anchors, views, topo);
  const int batch = anchors.batch();
  if (batch != views.batch()) throw std::invalid_argument("cohi_loss: anchor/view count mismatch");
  if (batch < 2) throw std::invalid_argument("cohi_loss: batch must hold at least 2 pairs");

  const S off_w = S(1) / (S(batch) * S(batch - 1));
  const S diag_w = S(-1) / S(batch);
  if (grad_anchor_levels) grad_anchor_levels->resize(topo.depth + 1);
  if (grad_view_levels) grad_view_levels->resize(topo.depth + 1);

  S loss = 0;
  for (int t : similarity_levels(topo.depth, cfg.level_range)) {
    MatX<S> ra = anchors.level_post[t].cwiseSqrt();  // B x 2^t
    MatX<S> rv = views.level_post[t].cwiseSqrt();
    MatX<S> sim = ra * rv.transpose();               // sim(j, i) = s_t(x_j, x~_i)
    const S trace = sim.trace();
    loss += off_w * (sim.sum() - trace) + diag_w * trace;

    if (grad_anchor_levels) {
      // dLoss/dsim is off_w off-diagonal, diag_w on the diagonal.
      MatX<S> gsim = MatX<S>::Constant(batch, batch, off_w * scale);
      gsim.diagonal().setConstant(diag_w * scale);
      MatX<S> ga_sqrt = gsim * rv;              // dLoss/d ra
      MatX<S> gv_sqrt = gsim.transpose() * ra;  // dLoss/d rv
      auto into = [&](std::vector<MatX<S>>& dst, const MatX<S>& g_sqrt, const MatX<S>& sqrt_post) {
        if (dst[t].size() == 0) dst[t] = MatX<S>::Zero(batch, 1 << t);
        dst[t].array() +=
            g_sqrt.array() * S(0.5) / sqrt_post.array().max(S(1e-12));
      };
      into(*grad_anchor_levels, ga_sqrt, ra);
      into(*grad_view_levels, gv_sqrt, rv);
    }
  }
  return loss;
}

template <class S>
S cohi_loss(const RoutingTensor<S>& anchors, const RoutingTensor<S>& views,
            const TreeTopology& topo, const LossConfig& cfg) {
  return cohi_loss_impl<S>(anchors, views, topo, cfg, S(1), nullptr, nullptr);
}

// R1: per-node cross-entropy against [0.5, 0.5], where each node's split
// statistic alpha_n is the reach-probability-weighted batch mean of its
// left-edge probability over anchors and views together. Only nodes with
// both subtrees alive contribute; redirected and dead nodes are constants
// of the optimization and add nothing.
template <class S>
S r1_balance_impl(const RoutingTensor<S>& anchors, const RoutingTensor<S>& views,
                  const TreeTopology& topo, double epsilon, S scale,
                  std::vector<MatX<S>>* grad_anchor_levels,
                  std::vector<MatX<S>>* grad_view_levels, MatX<S>* grad_anchor_edge,
                  MatX<S>* grad_view_edge) {
  detail::check_same_tree(anchors, views, topo);
  const int batch_a = anchors.batch();
  const int batch_v = views.batch();
  if (batch_a + batch_v < 1) throw std::invalid_argument("r1_balance: empty batch");
  const auto states = node_routing_states(topo);

  if (grad_anchor_levels) {
    grad_anchor_levels->resize(topo.depth + 1);
    grad_view_levels->resize(topo.depth + 1);
    if (grad_anchor_edge->size() == 0)
      *grad_anchor_edge = MatX<S>::Zero(batch_a, topo.num_internal());
    if (grad_view_edge->size() == 0) *grad_view_edge = MatX<S>::Zero(batch_v, topo.num_internal());
  }

  S loss = 0;
  for (int t = 0; t < topo.depth; ++t) {
    for (int i = 0; i < (1 << t); ++i) {
      const int id = internal_node_id(t, i);
      if (states[id] != NodeRouting::kTrainable) continue;
      const auto reach_a = anchors.level_post[t].col(i);
      const auto reach_v = views.level_post[t].col(i);
      const auto p_a = anchors.edge_left.col(id);
      const auto p_v = views.edge_left.col(id);
      const S weighted = reach_a.dot(p_a) + reach_v.dot(p_v);
      const S reach_sum = reach_a.sum() + reach_v.sum();
      if (double(reach_sum) <= 0) continue;
      const S alpha_raw = weighted / reach_sum;
      const S alpha = std::min(std::max(alpha_raw, S(epsilon)), S(1 - epsilon));
      loss += -(S(0.5) * std::log(alpha) + S(0.5) * std::log(S(1) - alpha));

      if (grad_anchor_levels && alpha_raw > S(epsilon) && alpha_raw < S(1 - epsilon)) {
        const S dloss_dalpha = scale * (alpha - S(0.5)) / (alpha * (S(1) - alpha));
        // alpha = weighted / reach_sum
        grad_anchor_edge->col(id) += dloss_dalpha / reach_sum * reach_a;
        grad_view_edge->col(id) += dloss_dalpha / reach_sum * reach_v;
        auto level_grad = [&](std::vector<MatX<S>>& dst, const auto& p, int rows) {
          if (dst[t].size() == 0) dst[t] = MatX<S>::Zero(rows, 1 << t);
          dst[t].col(i) += dloss_dalpha / reach_sum * (p.array() - alpha_raw).matrix();
        };
        level_grad(*grad_anchor_levels, p_a, batch_a);
        level_grad(*grad_view_levels, p_v, batch_v);
      }
    }
  }
  return loss;
}

template <class S>
S r1_balance(const RoutingTensor<S>& anchors, const RoutingTensor<S>& views,
             const TreeTopology& topo, double epsilon = 1e-6) {
  return r1_balance_impl<S>(anchors, views, topo, epsilon, S(1), nullptr, nullptr, nullptr,
                            nullptr);
}

// NT-Xent over 2N positionally paired embeddings: softmax cross-entropy on
// 1/tau-scaled cosine similarities, self-similarity excluded.
template <class S>
S ntxent_impl(const MatX<S>& anchors, const MatX<S>& views, double tau, S scale,
              MatX<S>* grad_anchors, MatX<S>* grad_views) {
  if (anchors.rows() != views.rows() || anchors.cols() != views.cols())
    throw std::invalid_argument("ntxent: anchor/view shape mismatch");
  const int n = int(anchors.rows());
  if (n < 2) throw std::invalid_argument("ntxent: need at least 2 pairs");
  if (tau <= 0) throw std::invalid_argument("ntxent: temperature must be > 0");
  const int rows = 2 * n;

  MatX<S> all(rows, anchors.cols());
  all.topRows(n) = anchors;
  all.bottomRows(n) = views;
  VecX<S> norms = all.rowwise().norm();
  if ((norms.array() <= S(0)).any()) throw numeric_error("ntxent: zero-norm embedding");
  MatX<S> unit = all.array().colwise() / norms.array();
  MatX<S> cos = unit * unit.transpose();
  MatX<S> scaled = cos / S(tau);

  auto partner = [n](int a) { return a < n ? a + n : a - n; };

  // Row-wise log-sum-exp over b != a.
  S loss = 0;
  MatX<S> softmax(rows, rows);
  for (int a = 0; a < rows; ++a) {
    S row_max = std::numeric_limits<S>::lowest();
    for (int b = 0; b < rows; ++b)
      if (b != a) row_max = std::max(row_max, scaled(a, b));
    S denom = 0;
    for (int b = 0; b < rows; ++b)
      denom += (b == a) ? S(0) : std::exp(scaled(a, b) - row_max);
    const S log_denom = std::log(denom) + row_max;
    loss += log_denom - scaled(a, partner(a));
    for (int b = 0; b < rows; ++b)
      softmax(a, b) = (b == a) ? S(0) : std::exp(scaled(a, b) - log_denom);
  }
  loss /= S(rows);

  if (grad_anchors) {
    // dLoss/dcos(a,b), rows treated independently, then symmetrized through
    // the shared cosine entries.
    MatX<S> gcos = softmax;
    for (int a = 0; a < rows; ++a) gcos(a, partner(a)) -= S(1);
    gcos *= scale / (S(rows) * S(tau));
    MatX<S> gunit = (gcos + gcos.transpose()) * unit;
    // Through the normalization: e^ = e / |e|.
    MatX<S> grad_all(rows, all.cols());
    for (int a = 0; a < rows; ++a) {
      const S dot = gunit.row(a).dot(unit.row(a));
      grad_all.row(a) = (gunit.row(a) - dot * unit.row(a)) / norms[a];
    }
    if (grad_anchors->size() == 0) *grad_anchors = MatX<S>::Zero(n, all.cols());
    if (grad_views->size() == 0) *grad_views = MatX<S>::Zero(n, all.cols());
    *grad_anchors += grad_all.topRows(n);
    *grad_views += grad_all.bottomRows(n);
  }
  return loss;
}

template <class S>
S ntxent(const MatX<S>& anchors, const MatX<S>& views, double tau) {
  return ntxent_impl<S>(anchors, views, tau, S(1), nullptr, nullptr);
}

// Eq.-style combination: total = cohi + beta1 * r1 + beta2 * r2.
template <class S>
LossBreakdown total_loss(const RoutingTensor<S>& anchors, const RoutingTensor<S>& views,
                         const MatX<S>& contrast_anchors, const MatX<S>& contrast_views,
                         const TreeTopology& topo, const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.cohi = double(cohi_loss(anchors, views, topo, cfg));
  out.r1 = double(r1_balance(anchors, views, topo, cfg.epsilon));
  out.r2 = double(ntxent(contrast_anchors, contrast_views, cfg.temperature));
  out.total = out.cohi + cfg.resolved_beta1(topo.depth) * out.r1 + cfg.beta2 * out.r2;
  return out;
}

}  // namespace cohiclust
