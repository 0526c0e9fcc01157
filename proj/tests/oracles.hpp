#pragma once

// Brute-force reference implementations used to pin expected values in tests.
// Everything here is deliberately structured differently from the library code
// (per-path walks, explicit pair loops, graph BFS) so the two cannot share bugs.

#include <cmath>
#include <deque>
#include <map>
#include <vector>

#include "cohiclust/common.hpp"
#include "cohiclust/tree.hpp"

namespace oracle {

using cohiclust::TreeTopology;

inline bool subtree_has_active_leaf(const TreeTopology& topo, int level, int index) {
  const int span = 1 << (topo.depth - level);
  for (int leaf = index * span; leaf < (index + 1) * span; ++leaf)
    if (topo.active_leaf_mask[leaf]) return true;
  return false;
}

// Probability of reaching node (level, index): walk the path from the root,
// multiplying the mask-adjusted edge probability at each step.
inline double node_posterior(const TreeTopology& topo, const std::vector<double>& edge_left,
                             int level, int index) {
  double prob = 1.0;
  for (int s = 0; s < level; ++s) {
    const int parent_index = index >> (level - s);
    const int child_index = index >> (level - s - 1);
    const bool go_left = (child_index % 2) == 0;
    const int node_id = (1 << s) - 1 + parent_index;
    const bool left_alive = subtree_has_active_leaf(topo, s + 1, 2 * parent_index);
    const bool right_alive = subtree_has_active_leaf(topo, s + 1, 2 * parent_index + 1);
    double p_left;
    if (left_alive && right_alive)
      p_left = edge_left[node_id];
    else if (left_alive)
      p_left = 1.0;
    else if (right_alive)
      p_left = 0.0;
    else
      p_left = 0.0;  // dead subtree: no mass either way
    prob *= go_left ? p_left : 1.0 - p_left;
  }
  return prob;
}

inline std::vector<double> leaf_posterior(const TreeTopology& topo,
                                          const std::vector<double>& edge_left) {
  std::vector<double> post(size_t(1) << topo.depth);
  for (int leaf = 0; leaf < (1 << topo.depth); ++leaf)
    post[leaf] = node_posterior(topo, edge_left, topo.depth, leaf);
  return post;
}

inline std::vector<double> level_posterior(const TreeTopology& topo,
                                           const std::vector<double>& edge_left, int level) {
  std::vector<double> post(size_t(1) << level);
  for (int i = 0; i < (1 << level); ++i) post[i] = node_posterior(topo, edge_left, level, i);
  return post;
}

// Shortest path length between two leaves on the explicit complete-tree graph.
inline int bfs_leaf_distance(int depth, int leaf_a, int leaf_b) {
  // Nodes keyed by (level, index); edges parent <-> children.
  auto key = [](int level, int index) { return (level << 20) | index; };
  const int start = key(depth, leaf_a);
  const int goal = key(depth, leaf_b);
  std::map<int, int> dist{{start, 0}};
  std::deque<int> queue{start};
  while (!queue.empty()) {
    const int node = queue.front();
    queue.pop_front();
    if (node == goal) return dist[node];
    const int level = node >> 20;
    const int index = node & ((1 << 20) - 1);
    std::vector<int> next;
    if (level > 0) next.push_back(key(level - 1, index / 2));
    if (level < depth) {
      next.push_back(key(level + 1, 2 * index));
      next.push_back(key(level + 1, 2 * index + 1));
    }
    for (int n : next)
      if (!dist.count(n)) {
        dist[n] = dist[node] + 1;
        queue.push_back(n);
      }
  }
  return -1;
}

// Bhattacharyya similarity by direct long-double summation.
inline double bhattacharyya(const std::vector<double>& p, const std::vector<double>& q) {
  long double s = 0;
  for (size_t i = 0; i < p.size(); ++i) s += sqrtl((long double)p[i] * (long double)q[i]);
  return double(s);
}

// Aggregated per-pair similarity over the given levels, from scratch.
inline double pair_similarity(const TreeTopology& topo, const std::vector<double>& edges_a,
                              const std::vector<double>& edges_b, const std::vector<int>& levels) {
  double s = 0;
  for (int t : levels)
    s += bhattacharyya(level_posterior(topo, edges_a, t), level_posterior(topo, edges_b, t));
  return s;
}

// CoHiLoss by explicit double loop over the N(N-1) negative and N positive pairs.
inline double cohi_loss(const TreeTopology& topo,
                        const std::vector<std::vector<double>>& anchor_edges,
                        const std::vector<std::vector<double>>& view_edges,
                        const std::vector<int>& levels) {
  const int n = int(anchor_edges.size());
  double cross = 0, positive = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double s = pair_similarity(topo, anchor_edges[j], view_edges[i], levels);
      if (i == j)
        positive += s;
      else
        cross += s;
    }
  }
  return cross / (double(n) * (n - 1)) - positive / double(n);
}

// NT-Xent by direct softmax arithmetic on the full 2N x 2N cosine matrix.
inline double ntxent(const std::vector<std::vector<double>>& anchors,
                     const std::vector<std::vector<double>>& views, double tau) {
  const int n = int(anchors.size());
  std::vector<std::vector<double>> all(anchors);
  all.insert(all.end(), views.begin(), views.end());
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t k = 0; k < a.size(); ++k) {
      dot += a[k] * b[k];
      na += a[k] * a[k];
      nb += b[k] * b[k];
    }
    return dot / std::sqrt(na * nb);
  };
  double total = 0;
  for (int a = 0; a < 2 * n; ++a) {
    const int partner = a < n ? a + n : a - n;
    double denom = 0;
    for (int b = 0; b < 2 * n; ++b) {
      if (b == a) continue;
      denom += std::exp(cosine(all[a], all[b]) / tau);
    }
    total += -std::log(std::exp(cosine(all[a], all[partner]) / tau) / denom);
  }
  return total / (2.0 * n);
}

// Metrics from explicit pair enumeration / contingency counts.

inline double nmi_from_labels(const std::vector<int>& pred, const std::vector<int>& truth) {
  const double n = double(pred.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  for (size_t i = 0; i < pred.size(); ++i) {
    joint[{pred[i], truth[i]}] += 1;
    pa[pred[i]] += 1;
    pb[truth[i]] += 1;
  }
  double mi = 0;
  for (auto& [key, c] : joint)
    mi += (c / n) * std::log((c * n) / (pa[key.first] * pb[key.second]));
  double ha = 0, hb = 0;
  for (auto& [k, c] : pa) ha -= (c / n) * std::log(c / n);
  for (auto& [k, c] : pb) hb -= (c / n) * std::log(c / n);
  if (ha + hb == 0) return 1.0;
  return 2.0 * mi / (ha + hb);
}

inline double ari_from_pairs(const std::vector<int>& pred, const std::vector<int>& truth) {
  const int n = int(pred.size());
  double a = 0, b = 0, c = 0, d = 0;  // same-same, same-diff, diff-same, diff-diff
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const bool same_pred = pred[i] == pred[j];
      const bool same_true = truth[i] == truth[j];
      if (same_pred && same_true)
        a += 1;
      else if (same_pred)
        b += 1;
      else if (same_true)
        c += 1;
      else
        d += 1;
    }
  const double total = a + b + c + d;
  const double expected = (a + b) * (a + c) / total;
  const double max_index = 0.5 * ((a + b) + (a + c));
  if (max_index == expected) return pred == truth ? 1.0 : 0.0;
  return (a - expected) / (max_index - expected);
}

// Clustering accuracy by exhaustive search over one-to-one cluster -> class maps.
// Only usable for small numbers of clusters.
inline double acc_exhaustive(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::vector<int> clusters, classes;
  for (int p : pred)
    if (std::find(clusters.begin(), clusters.end(), p) == clusters.end()) clusters.push_back(p);
  for (int t : truth)
    if (std::find(classes.begin(), classes.end(), t) == classes.end()) classes.push_back(t);
  const size_t k = std::max(clusters.size(), classes.size());
  std::vector<int> perm(k);
  for (size_t i = 0; i < k; ++i) perm[i] = int(i);
  double best = 0;
  std::sort(perm.begin(), perm.end());
  do {
    double correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      const auto it = std::find(clusters.begin(), clusters.end(), pred[i]);
      const size_t ci = size_t(it - clusters.begin());
      const size_t mapped = size_t(perm[ci]);
      if (mapped < classes.size() && classes[mapped] == truth[i]) correct += 1;
    }
    best = std::max(best, correct / double(pred.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Dendrogram purity by explicit enumeration of all same-class pairs.
inline double dendrogram_purity_pairs(const TreeTopology& topo, const std::vector<int>& leaf,
                                      const std::vector<int>& label) {
  const int n = int(leaf.size());
  auto lca_level = [&](int la, int lb) {
    if (la == lb) return topo.depth;
    int level = topo.depth;
    while (la != lb) {
      la /= 2;
      lb /= 2;
      --level;
    }
    return level;
  };
  double purity_sum = 0;
  long pair_count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (label[i] != label[j]) continue;
      const int level = lca_level(leaf[i], leaf[j]);
      const int subtree_index = leaf[i] >> (topo.depth - level);
      const int span = 1 << (topo.depth - level);
      double in_subtree = 0, same_class = 0;
      for (int k = 0; k < n; ++k) {
        if (leaf[k] >> (topo.depth - level) != subtree_index) continue;
        in_subtree += 1;
        if (label[k] == label[i]) same_class += 1;
      }
      (void)span;
      purity_sum += same_class / in_subtree;
      ++pair_count;
    }
  if (pair_count == 0) throw std::invalid_argument("no same-class pair");
  return purity_sum / double(pair_count);
}

// Class distance matrix by explicit pair enumeration over samples.
inline cohiclust::MatXd class_distances_pairs(const TreeTopology& topo,
                                              const std::vector<int>& leaf,
                                              const std::vector<int>& label, int num_classes) {
  cohiclust::MatXd dist = cohiclust::MatXd::Zero(num_classes, num_classes);
  cohiclust::MatXd count = cohiclust::MatXd::Zero(num_classes, num_classes);
  const int n = int(leaf.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int a = label[i], b = label[j];
      dist(a, b) += cohiclust::leaf_tree_distance(topo, leaf[i], leaf[j]);
      count(a, b) += 1;
    }
  for (int a = 0; a < num_classes; ++a)
    for (int b = 0; b < num_classes; ++b)
      if (count(a, b) > 0) dist(a, b) /= count(a, b);
  return dist;
}

}  // namespace oracle
