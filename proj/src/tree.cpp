#include "cohiclust/tree.hpp"

#include <bit>
#include <sstream>

namespace cohiclust {

TreeTopology TreeTopology::complete(int depth) {
  if (depth < 1) throw std::invalid_argument("tree depth must be >= 1");
  if (depth > 24) throw std::invalid_argument("tree depth too large");
  TreeTopology topo;
  topo.depth = depth;
  topo.active_leaf_mask.assign(size_t(1) << depth, 1);
  return topo;
}

int TreeTopology::active_leaf_count() const {
  int n = 0;
  for (uint8_t a : active_leaf_mask) n += a != 0;
  return n;
}

bool TreeTopology::leaf_active(int leaf) const {
  if (leaf < 0 || leaf >= num_leaves())
    throw std::invalid_argument("leaf index " + std::to_string(leaf) + " out of range");
  return active_leaf_mask[leaf] != 0;
}

bool TreeTopology::subtree_alive(int level, int index) const {
  if (level < 0 || level > depth || index < 0 || index >= (1 << level))
    throw std::invalid_argument("node (" + std::to_string(level) + ", " +
                                std::to_string(index) + ") invalid");
  const int span = 1 << (depth - level);
  const int first = index * span;
  for (int leaf = first; leaf < first + span; ++leaf)
    if (active_leaf_mask[leaf]) return true;
  return false;
}

void TreeTopology::validate() const {
  if (depth < 1) throw internal_error("topology: depth < 1");
  if (active_leaf_mask.size() != size_t(num_leaves()))
    throw internal_error("topology: mask length mismatch");
  if (active_leaf_count() < 2) throw internal_error("topology: fewer than 2 active leaves");
}

std::string TreeTopology::to_record() const {
  std::string bits;
  bits.reserve(active_leaf_mask.size());
  for (uint8_t a : active_leaf_mask) bits.push_back(a ? '1' : '0');
  return "{depth=" + std::to_string(depth) + " mask=" + bits + "}";
}

TreeTopology TreeTopology::from_record(const std::string& record) {
  int depth = 0;
  std::string bits;
  if (record.size() < 2 || record.front() != '{' || record.back() != '}')
    throw format_error("topology record: missing braces: " + record);
  std::istringstream in(record.substr(1, record.size() - 2));
  std::string field;
  while (in >> field) {
    if (field.rfind("depth=", 0) == 0)
      depth = std::stoi(field.substr(6));
    else if (field.rfind("mask=", 0) == 0)
      bits = field.substr(5);
    else
      throw format_error("topology record: unknown field '" + field + "'");
  }
  if (depth < 1 || bits.size() != size_t(1) << depth)
    throw format_error("topology record: depth/mask mismatch: " + record);
  TreeTopology topo;
  topo.depth = depth;
  topo.active_leaf_mask.resize(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != '0' && bits[i] != '1')
      throw format_error("topology record: mask must be a bit string");
    topo.active_leaf_mask[i] = bits[i] == '1';
  }
  topo.validate();
  return topo;
}

std::vector<NodeRouting> node_routing_states(const TreeTopology& topo) {
  std::vector<NodeRouting> states(topo.num_internal());
  for (int t = 0; t < topo.depth; ++t) {
    for (int i = 0; i < (1 << t); ++i) {
      const bool left = topo.subtree_alive(t + 1, 2 * i);
      const bool right = topo.subtree_alive(t + 1, 2 * i + 1);
      NodeRouting s = NodeRouting::kDead;
      if (left && right)
        s = NodeRouting::kTrainable;
      else if (left)
        s = NodeRouting::kForceLeft;
      else if (right)
        s = NodeRouting::kForceRight;
      states[internal_node_id(t, i)] = s;
    }
  }
  return states;
}

int node_index(int level, const PathCode& path) {
  if (level < 0) throw std::invalid_argument("level must be >= 0");
  if (path.decisions.size() < size_t(level))
    throw std::invalid_argument("path has " + std::to_string(path.decisions.size()) +
                                " decisions, need at least " + std::to_string(level));
  int index = 0;
  for (int s = 0; s < level; ++s) index = 2 * index + (path.decisions[s] ? 1 : 0);
  return index;
}

int leaf_tree_distance(const TreeTopology& topo, int leaf_a, int leaf_b) {
  if (!topo.leaf_active(leaf_a) || !topo.leaf_active(leaf_b))
    throw std::invalid_argument("leaf_tree_distance requires active leaves");
  if (leaf_a == leaf_b) return 0;
  // Leaves differ first at the highest set bit of a xor b; the LCA sits just above it.
  const unsigned diff = unsigned(leaf_a) ^ unsigned(leaf_b);
  const int highest = std::bit_width(diff) - 1;
  const int lca_level = topo.depth - highest - 1;
  return 2 * (topo.depth - lca_level);
}

TreeTopology prune_leaf(const TreeTopology& topo, int leaf_index) {
  if (!topo.leaf_active(leaf_index))
    throw std::invalid_argument("cannot prune inactive leaf " + std::to_string(leaf_index));
  if (topo.active_leaf_count() < 3)
    throw invalid_state_error("pruning would drop below 2 active leaves");
  TreeTopology out = topo;
  out.active_leaf_mask[leaf_index] = 0;
  return out;
}

int assign_cluster(const VecXd& leaf_posterior, const TreeTopology& topo) {
  if (leaf_posterior.size() != topo.num_leaves())
    throw std::invalid_argument("posterior length does not match leaf count");
  int best = -1;
  double best_mass = 0.0;
  for (int leaf = 0; leaf < topo.num_leaves(); ++leaf) {
    if (!topo.active_leaf_mask[leaf]) continue;
    const double mass = leaf_posterior[leaf];
    if (mass > best_mass) {
      best_mass = mass;
      best = leaf;
    }
  }
  if (best < 0) throw internal_error("assign_cluster: posterior carries no mass on active leaves");
  return best;
}

}  // namespace cohiclust
