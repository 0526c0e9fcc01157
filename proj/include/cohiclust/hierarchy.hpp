#pragma once

// Trained-tree report: per-node reach fractions and class composition, with
// json-tree (canonical, versioned) and Graphviz dot renderings.

#include <string>
#include <vector>

#include "cohiclust/metrics.hpp"
#include "cohiclust/tree.hpp"

namespace cohiclust {

struct HierarchyNode {
  int level = 0;
  int index = 0;
  bool active = false;      // subtree contains at least one active leaf
  double reach_fraction = 0;
  std::vector<long> class_counts;
  int cluster_id = -1;  // consecutive id over active leaves; -1 elsewhere
};

struct HierarchyReport {
  int version = 1;
  TreeTopology topo;
  long total_samples = 0;
  std::vector<std::string> class_names;
  std::vector<HierarchyNode> nodes;  // level-major over all 2^(T+1)-1 nodes

  const HierarchyNode& node(int level, int index) const;
  void check_invariants() const;
};

// `mean_level_posteriors[t]` is the dataset-mean P_t (length 2^t).
HierarchyReport build_hierarchy_report(const LabeledAssignment& assignment,
                                       const std::vector<VecXd>& mean_level_posteriors,
                                       std::vector<std::string> class_names = {});

std::string hierarchy_to_json(const HierarchyReport& report);
HierarchyReport hierarchy_from_json(const std::string& text);

// Active nodes only, labeled with the dominant class and reach fraction.
std::string hierarchy_to_dot(const HierarchyReport& report);

void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace cohiclust
