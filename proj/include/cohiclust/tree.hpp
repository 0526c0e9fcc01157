#pragma once

// Soft binary decision tree mathematics: complete-tree topology with an active
// leaf mask, path/level posteriors, pruning via deterministic edge redirection,
// and leaf-to-leaf edge distances. Everything here is a pure function of its
// inputs; the trainable parameters live in model.hpp.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cohiclust/common.hpp"

namespace cohiclust {

// Internal nodes of a depth-T complete tree in heap order: node (t, i) with
// 0 <= t < T, 0 <= i < 2^t sits at id 2^t - 1 + i. The router head's output
// neuron n (1-based, n = 2^t + i) is exactly id n - 1.
inline int internal_node_id(int level, int index) { return (1 << level) - 1 + index; }

struct TreeTopology {
  int depth = 1;                          // T >= 1
  std::vector<uint8_t> active_leaf_mask;  // 2^T entries, >= 2 set

  static TreeTopology complete(int depth);

  int num_internal() const { return (1 << depth) - 1; }
  int num_leaves() const { return 1 << depth; }
  int active_leaf_count() const;
  bool leaf_active(int leaf) const;

  // True when the subtree rooted at (level, index) contains an active leaf.
  bool subtree_alive(int level, int index) const;

  void validate() const;

  // Text record "{depth=T mask=1011}" consumed by the hierarchy export format.
  std::string to_record() const;
  static TreeTopology from_record(const std::string& record);

  bool operator==(const TreeTopology&) const = default;
};

// Routing behavior at an internal node once the active mask is applied.
enum class NodeRouting : uint8_t {
  kTrainable,   // both subtrees alive, left-edge prob = sigmoid output
  kForceLeft,   // right subtree dead, left edge carries probability 1
  kForceRight,  // left subtree dead, left edge carries probability 0
  kDead,        // no active leaf below, node unreachable
};

// Per-internal-node routing states in heap order, derived from the mask.
std::vector<NodeRouting> node_routing_states(const TreeTopology& topo);

struct PathCode {
  std::vector<uint8_t> decisions;  // y_s in {0,1}, y_s = 1 means right branch
};

// b_t(y) = sum_m y_m 2^(t-m): index of the node reached at `level`.
int node_index(int level, const PathCode& path);

// Number of tree edges between two active leaves: 2 * (T - level(LCA)).
int leaf_tree_distance(const TreeTopology& topo, int leaf_a, int leaf_b);

// Deactivates one leaf. Requires >= 3 active leaves beforehand so the
// invariant of >= 2 active leaves always holds.
TreeTopology prune_leaf(const TreeTopology& topo, int leaf_index);

// Hard assignment for evaluation: argmax over active leaves, lowest index wins ties.
int assign_cluster(const VecXd& leaf_posterior, const TreeTopology& topo);

// Per-sample edge probabilities plus the posteriors P_t(x) they induce.
template <class S>
struct RoutingTensor {
  MatX<S> edge_left;               // batch x K, raw sigmoid outputs in (0,1)
  std::vector<MatX<S>> level_post; // level t in [0, T]: batch x 2^t
  int depth = 0;

  int batch() const { return static_cast<int>(edge_left.rows()); }
};

namespace detail {

template <class S>
void check_edge_probs(const MatX<S>& edge_left, const TreeTopology& topo) {
  if (edge_left.cols() != topo.num_internal())
    throw std::invalid_argument("edge probabilities: expected " +
                                std::to_string(topo.num_internal()) + " per sample, got " +
                                std::to_string(edge_left.cols()));
  if ((edge_left.array() < S(0)).any() || (edge_left.array() > S(1)).any())
    throw std::invalid_argument("edge probability outside [0, 1]");
}

}  // namespace detail

// Forward routing: P_0 = [1]; P_{t+1}^{2i} = P_t^i * p~, P_{t+1}^{2i+1} = P_t^i * (1 - p~)
// where p~ is the mask-adjusted left-edge probability.
template <class S>
RoutingTensor<S> route_tree(const MatX<S>& edge_left, const TreeTopology& topo) {
  topo.validate();
  detail::check_edge_probs(edge_left, topo);
  const int batch = static_cast<int>(edge_left.rows());
  const auto states = node_routing_states(topo);

  RoutingTensor<S> rt;
  rt.edge_left = edge_left;
  rt.depth = topo.depth;
  rt.level_post.resize(topo.depth + 1);
  rt.level_post[0] = MatX<S>::Ones(batch, 1);
  for (int t = 0; t < topo.depth; ++t) {
    const int width = 1 << t;
    MatX<S>& next = rt.level_post[t + 1];
    next.resize(batch, 2 * width);
    for (int i = 0; i < width; ++i) {
      const int id = internal_node_id(t, i);
      const auto reach = rt.level_post[t].col(i);
      switch (states[id]) {
        case NodeRouting::kTrainable:
          next.col(2 * i) = reach.cwiseProduct(edge_left.col(id));
          next.col(2 * i + 1) = reach - next.col(2 * i);
          break;
        case NodeRouting::kForceLeft:
          next.col(2 * i) = reach;
          next.col(2 * i + 1).setZero();
          break;
        case NodeRouting::kForceRight:
          next.col(2 * i).setZero();
          next.col(2 * i + 1) = reach;
          break;
        case NodeRouting::kDead:
          next.col(2 * i).setZero();
          next.col(2 * i + 1).setZero();
          break;
      }
    }
  }
  return rt;
}

// Gradient of a scalar loss through route_tree. `grad_level_post[t]` holds
// dLoss/dP_t (empty matrix = no direct contribution); `grad_edge_direct`
// (optional, batch x K) holds dLoss/dp accumulated outside the recursion
// (R1's explicit p term). Redirected and dead nodes propagate no gradient
// into the raw probabilities, which freezes their parameters.
template <class S>
MatX<S> route_tree_backward(const RoutingTensor<S>& rt, const TreeTopology& topo,
                            std::vector<MatX<S>> grad_level_post,
                            const MatX<S>& grad_edge_direct = MatX<S>()) {
  const int batch = rt.batch();
  const int T = topo.depth;
  const auto states = node_routing_states(topo);
  grad_level_post.resize(T + 1);
  for (int t = 0; t <= T; ++t) {
    if (grad_level_post[t].size() == 0) grad_level_post[t] = MatX<S>::Zero(batch, 1 << t);
  }

  MatX<S> grad_edge = MatX<S>::Zero(batch, topo.num_internal());
  for (int t = T - 1; t >= 0; --t) {
    const int width = 1 << t;
    const MatX<S>& g_next = grad_level_post[t + 1];
    for (int i = 0; i < width; ++i) {
      const int id = internal_node_id(t, i);
      const auto g_left = g_next.col(2 * i);
      const auto g_right = g_next.col(2 * i + 1);
      switch (states[id]) {
        case NodeRouting::kTrainable:
          grad_edge.col(id) =
              rt.level_post[t].col(i).cwiseProduct(g_left - g_right);
          grad_level_post[t].col(i) +=
              rt.edge_left.col(id).cwiseProduct(g_left) +
              (MatX<S>::Ones(batch, 1) - rt.edge_left.col(id)).cwiseProduct(g_right);
          break;
        case NodeRouting::kForceLeft:
          grad_level_post[t].col(i) += g_left;
          break;
        case NodeRouting::kForceRight:
          grad_level_post[t].col(i) += g_right;
          break;
        case NodeRouting::kDead:
          break;
      }
    }
  }
  if (grad_edge_direct.size() != 0) {
    for (int id = 0; id < topo.num_internal(); ++id)
      if (states[id] == NodeRouting::kTrainable) grad_edge.col(id) += grad_edge_direct.col(id);
  }
  return grad_edge;
}

// P_T(x) for a single sample.
template <class S>
VecX<S> leaf_posterior(const VecX<S>& edge_left, const TreeTopology& topo) {
  MatX<S> row = edge_left.transpose();
  auto rt = route_tree<S>(row, topo);
  return rt.level_post[topo.depth].row(0).transpose();
}

// P_t(x) for each requested level, in the order given.
template <class S>
std::vector<VecX<S>> level_posteriors(const VecX<S>& edge_left, const TreeTopology& topo,
                                      const std::vector<int>& levels) {
  for (int t : levels)
    if (t < 0 || t > topo.depth)
      throw std::invalid_argument("level " + std::to_string(t) + " outside [0, " +
                                  std::to_string(topo.depth) + "]");
  MatX<S> row = edge_left.transpose();
  auto rt = route_tree<S>(row, topo);
  std::vector<VecX<S>> out;
  out.reserve(levels.size());
  for (int t : levels) out.push_back(rt.level_post[t].row(0).transpose());
  return out;
}

}  // namespace cohiclust
