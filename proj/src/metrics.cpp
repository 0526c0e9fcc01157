#include "cohiclust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace cohiclust {

void LabeledAssignment::validate() const {
  if (leaf.size() != label.size())
    throw std::invalid_argument("assignment: leaf/label length mismatch");
  if (leaf.empty()) throw std::invalid_argument("assignment: empty");
  topo.validate();
  for (int l : leaf)
    if (!topo.leaf_active(l))
      throw std::invalid_argument("assignment: predicted leaf " + std::to_string(l) +
                                  " is not active");
  for (int c : label)
    if (c < 0) throw std::invalid_argument("assignment: negative class label");
}

int LabeledAssignment::num_classes() const {
  int maxc = 0;
  for (int c : label) maxc = std::max(maxc, c);
  return maxc + 1;
}

namespace {

// contingency[cluster][class], using dense leaf indexing of active leaves
struct Contingency {
  MatXd counts;  // clusters x classes
  VecXd cluster_sizes, class_sizes;
  double total = 0;
};

Contingency contingency_of(const LabeledAssignment& a) {
  std::map<int, int> leaf_to_cluster;
  for (int l : a.leaf)
    if (!leaf_to_cluster.count(l)) {
      const int next = int(leaf_to_cluster.size());
      leaf_to_cluster[l] = next;
    }
  Contingency table;
  const int k = int(leaf_to_cluster.size());
  const int classes = a.num_classes();
  table.counts = MatXd::Zero(k, classes);
  for (size_t i = 0; i < a.leaf.size(); ++i)
    table.counts(leaf_to_cluster[a.leaf[i]], a.label[i]) += 1;
  table.cluster_sizes = table.counts.rowwise().sum();
  table.class_sizes = table.counts.colwise().sum();
  table.total = double(a.leaf.size());
  return table;
}

double entropy(const VecXd& sizes, double total) {
  double h = 0;
  for (int i = 0; i < sizes.size(); ++i)
    if (sizes[i] > 0) h -= (sizes[i] / total) * std::log(sizes[i] / total);
  return h;
}

double comb2(double x) { return x < 2 ? 0.0 : x * (x - 1) / 2.0; }

}  // namespace

double nmi(const LabeledAssignment& assignment) {
  assignment.validate();
  const auto table = contingency_of(assignment);
  const double n = table.total;
  double mi = 0;
  for (int i = 0; i < table.counts.rows(); ++i)
    for (int j = 0; j < table.counts.cols(); ++j) {
      const double c = table.counts(i, j);
      if (c > 0)
        mi += (c / n) * std::log(c * n / (table.cluster_sizes[i] * table.class_sizes[j]));
    }
  const double h_sum = entropy(table.cluster_sizes, n) + entropy(table.class_sizes, n);
  if (h_sum == 0) return 1.0;  // both partitions trivial and identical
  return std::max(0.0, 2.0 * mi / h_sum);
}

std::vector<int> hungarian_min_cost(const MatXd& cost) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("hungarian: matrix must be square");
  const int n = int(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double acc(const LabeledAssignment& assignment) {
  assignment.validate();
  const auto table = contingency_of(assignment);
  const int m = int(std::max(table.counts.rows(), table.counts.cols()));
  MatXd padded = MatXd::Zero(m, m);
  padded.topLeftCorner(table.counts.rows(), table.counts.cols()) = table.counts;
  // maximize matched counts = minimize (max - count)
  const double top = padded.maxCoeff();
  MatXd cost = MatXd::Constant(m, m, top) - padded;
  const auto match = hungarian_min_cost(cost);
  double correct = 0;
  for (int i = 0; i < m; ++i) correct += padded(i, match[i]);
  return correct / table.total;
}

double ari(const LabeledAssignment& assignment) {
  assignment.validate();
  if (assignment.leaf.size() < 2) throw std::invalid_argument("ari: need at least 2 samples");
  const auto table = contingency_of(assignment);
  double sum_cells = 0, sum_rows = 0, sum_cols = 0;
  for (int i = 0; i < table.counts.rows(); ++i)
    for (int j = 0; j < table.counts.cols(); ++j) sum_cells += comb2(table.counts(i, j));
  for (int i = 0; i < table.cluster_sizes.size(); ++i) sum_rows += comb2(table.cluster_sizes[i]);
  for (int j = 0; j < table.class_sizes.size(); ++j) sum_cols += comb2(table.class_sizes[j]);
  const double pairs = comb2(table.total);
  const double expected = sum_rows * sum_cols / pairs;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return sum_cells == max_index ? 1.0 : 0.0;
  return (sum_cells - expected) / (max_index - expected);
}

namespace {

// class counts in the subtree rooted at every (level, index), built bottom-up
struct SubtreeCounts {
  int depth = 0, classes = 0;
  std::vector<MatXd> per_level;  // level t: 2^t x classes

  double purity(int level, int index, int cls) const {
    const double total = per_level[level].row(index).sum();
    return total > 0 ? per_level[level](index, cls) / total : 0.0;
  }
};

SubtreeCounts subtree_counts(const LabeledAssignment& a) {
  SubtreeCounts sc;
  sc.depth = a.topo.depth;
  sc.classes = a.num_classes();
  sc.per_level.resize(sc.depth + 1);
  sc.per_level[sc.depth] = MatXd::Zero(a.topo.num_leaves(), sc.classes);
  for (size_t i = 0; i < a.leaf.size(); ++i) sc.per_level[sc.depth](a.leaf[i], a.label[i]) += 1;
  for (int t = sc.depth - 1; t >= 0; --t) {
    sc.per_level[t] = MatXd::Zero(1 << t, sc.classes);
    for (int i = 0; i < (1 << t); ++i)
      sc.per_level[t].row(i) = sc.per_level[t + 1].row(2 * i) + sc.per_level[t + 1].row(2 * i + 1);
  }
  return sc;
}

int lca_level_of(int depth, int leaf_a, int leaf_b) {
  int level = depth;
  while (leaf_a != leaf_b) {
    leaf_a /= 2;
    leaf_b /= 2;
    --level;
  }
  return level;
}

double same_class_pairs(const LabeledAssignment& a) {
  std::map<int, double> sizes;
  for (int c : a.label) sizes[c] += 1;
  double pairs = 0;
  for (auto& [c, n] : sizes) pairs += comb2(n);
  return pairs;
}

}  // namespace

double dendrogram_purity_exact(const LabeledAssignment& assignment) {
  assignment.validate();
  const double pairs = same_class_pairs(assignment);
  if (pairs == 0) throw std::invalid_argument("dendrogram purity: no same-class pair");
  const auto sc = subtree_counts(assignment);
  const auto& leaf_counts = sc.per_level[sc.depth];
  const int num_leaves = assignment.topo.num_leaves();

  double total = 0;
  for (int la = 0; la < num_leaves; ++la) {
    for (int lb = la; lb < num_leaves; ++lb) {
      const int level = lca_level_of(sc.depth, la, lb);
      const int ancestor = la >> (sc.depth - level);
      for (int c = 0; c < sc.classes; ++c) {
        const double n_a = leaf_counts(la, c);
        if (n_a == 0) continue;
        const double pair_count = la == lb ? comb2(n_a) : n_a * leaf_counts(lb, c);
        if (pair_count == 0) continue;
        total += pair_count * sc.purity(level, ancestor, c);
      }
    }
  }
  return total / pairs;
}

double dendrogram_purity_sampled(const LabeledAssignment& assignment, long pairs, uint64_t seed) {
  assignment.validate();
  if (pairs < 1) throw std::invalid_argument("dendrogram purity: sample count must be >= 1");
  const auto sc = subtree_counts(assignment);

  // index lists per class, classes weighted by their same-class pair counts
  std::map<int, std::vector<int>> members;
  for (size_t i = 0; i < assignment.label.size(); ++i)
    members[assignment.label[i]].push_back(int(i));
  std::vector<int> classes;
  std::vector<double> weights;
  for (auto& [c, idx] : members)
    if (idx.size() >= 2) {
      classes.push_back(c);
      weights.push_back(comb2(double(idx.size())));
    }
  if (classes.empty()) throw std::invalid_argument("dendrogram purity: no same-class pair");

  auto rng = derive_rng(seed, 'd', 'p');
  std::discrete_distribution<int> pick_class(weights.begin(), weights.end());
  double total = 0;
  for (long s = 0; s < pairs; ++s) {
    const int c = classes[pick_class(rng)];
    const auto& idx = members[c];
    std::uniform_int_distribution<size_t> pick(0, idx.size() - 1);
    size_t i = pick(rng), j = pick(rng);
    while (j == i) j = pick(rng);
    const int la = assignment.leaf[idx[i]], lb = assignment.leaf[idx[j]];
    const int level = lca_level_of(sc.depth, la, lb);
    total += sc.purity(level, la >> (sc.depth - level), c);
  }
  return total / double(pairs);
}

double dendrogram_purity(const LabeledAssignment& assignment,
                         const DendrogramPurityOptions& options) {
  if (int(assignment.leaf.size()) <= options.exact_threshold)
    return dendrogram_purity_exact(assignment);
  return dendrogram_purity_sampled(assignment, options.sampled_pairs, options.seed);
}

ClassDistanceMatrix class_distance_matrix(const LabeledAssignment& assignment,
                                          std::vector<std::string> class_names) {
  assignment.validate();
  const int classes = assignment.num_classes();
  const int num_leaves = assignment.topo.num_leaves();

  MatXd hist = MatXd::Zero(classes, num_leaves);
  for (size_t i = 0; i < assignment.leaf.size(); ++i)
    hist(assignment.label[i], assignment.leaf[i]) += 1;
  VecXd class_sizes = hist.rowwise().sum();

  // pairwise leaf distances once; classes aggregate over their leaf histograms
  MatXd leaf_dist = MatXd::Zero(num_leaves, num_leaves);
  for (int a = 0; a < num_leaves; ++a)
    for (int b = 0; b < num_leaves; ++b)
      if (assignment.topo.active_leaf_mask[a] && assignment.topo.active_leaf_mask[b])
        leaf_dist(a, b) = leaf_tree_distance(assignment.topo, a, b);

  ClassDistanceMatrix out;
  out.distances = MatXd::Zero(classes, classes);
  out.diagonal_flagged.assign(classes, 0);
  for (int a = 0; a < classes; ++a) {
    for (int b = 0; b < classes; ++b) {
      const double weighted = hist.row(a) * leaf_dist * hist.row(b).transpose();
      if (a == b) {
        const double pairs = class_sizes[a] * (class_sizes[a] - 1);
        if (pairs <= 0) {
          out.diagonal_flagged[a] = 1;  // distance 0 by convention
          continue;
        }
        out.distances(a, a) = weighted / pairs;  // self-pairs have distance 0 anyway
      } else {
        const double pairs = class_sizes[a] * class_sizes[b];
        if (pairs > 0) out.distances(a, b) = weighted / pairs;
      }
    }
  }
  if (class_names.empty())
    for (int c = 0; c < classes; ++c) class_names.push_back("class-" + std::to_string(c));
  out.class_names = std::move(class_names);
  return out;
}

namespace {

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char ch : field) {
    if (ch == '"') quoted += "\"\"";
    else quoted += ch;
  }
  return quoted + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace

void write_distance_csv(const std::string& path, const ClassDistanceMatrix& matrix) {
  std::ostringstream out;
  out << "class";
  for (const auto& name : matrix.class_names) out << "," << csv_quote(name);
  out << "\r\n";
  out.precision(10);
  for (int r = 0; r < matrix.distances.rows(); ++r) {
    out << csv_quote(matrix.class_names[r]);
    for (int c = 0; c < matrix.distances.cols(); ++c) out << "," << matrix.distances(r, c);
    out << "\r\n";
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw std::invalid_argument("cannot open '" + tmp + "' for writing");
    file << out.str();
  }
  std::filesystem::rename(tmp, path);
}

ClassDistanceMatrix read_distance_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw format_error(path + ": empty csv");
  auto header = csv_split(line);
  if (header.size() < 2 || header[0] != "class")
    throw format_error(path + ": expected 'class,<names...>' header");
  ClassDistanceMatrix matrix;
  matrix.class_names.assign(header.begin() + 1, header.end());
  const int n = int(matrix.class_names.size());
  matrix.distances.resize(n, n);
  matrix.diagonal_flagged.assign(n, 0);
  for (int r = 0; r < n; ++r) {
    if (!std::getline(in, line)) throw format_error(path + ": truncated after " +
                                                    std::to_string(r) + " rows");
    auto fields = csv_split(line);
    if (int(fields.size()) != n + 1) throw format_error(path + ": bad column count in row " +
                                                        std::to_string(r + 1));
    for (int c = 0; c < n; ++c) matrix.distances(r, c) = std::stod(fields[c + 1]);
  }
  return matrix;
}

}  // namespace cohiclust
