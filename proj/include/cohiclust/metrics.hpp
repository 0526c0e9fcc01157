#pragma once

// External validation against held-out labels: NMI, clustering accuracy via
// optimal assignment, ARI, dendrogram purity and tree-distance matrices.

#include <string>
#include <vector>

#include "cohiclust/tree.hpp"

namespace cohiclust {

struct LabeledAssignment {
  std::vector<int> leaf;   // predicted leaf per sample; must be active
  std::vector<int> label;  // ground-truth class per sample
  TreeTopology topo;

  void validate() const;
  int num_classes() const;
};

// Mutual information normalized by the arithmetic mean of the two entropies.
double nmi(const LabeledAssignment& assignment);

// Best one-to-one cluster-to-class mapping on the zero-padded square
// contingency matrix.
double acc(const LabeledAssignment& assignment);

double ari(const LabeledAssignment& assignment);

struct DendrogramPurityOptions {
  int exact_threshold = 5000;   // exact pair enumeration up to this sample count
  long sampled_pairs = 1000000; // same-class pairs drawn above the threshold
  uint64_t seed = 17;
};

double dendrogram_purity(const LabeledAssignment& assignment,
                         const DendrogramPurityOptions& options = {});
double dendrogram_purity_exact(const LabeledAssignment& assignment);
double dendrogram_purity_sampled(const LabeledAssignment& assignment, long pairs, uint64_t seed);

struct ClassDistanceMatrix {
  MatXd distances;                      // num_classes x num_classes, tree edges
  std::vector<std::string> class_names;
  std::vector<uint8_t> diagonal_flagged;  // class had < 2 samples, diagonal 0 by convention
};

ClassDistanceMatrix class_distance_matrix(const LabeledAssignment& assignment,
                                          std::vector<std::string> class_names = {});

// Minimum-cost perfect assignment on a square matrix; returns column per row.
std::vector<int> hungarian_min_cost(const MatXd& cost);

// RFC 4180 CSV with class-name headers.
void write_distance_csv(const std::string& path, const ClassDistanceMatrix& matrix);
ClassDistanceMatrix read_distance_csv(const std::string& path);

}  // namespace cohiclust
