#include "cohiclust/hierarchy.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cohiclust {

namespace {

int level_major_offset(int level) { return (1 << level) - 1; }

}  // namespace

const HierarchyNode& HierarchyReport::node(int level, int index) const {
  return nodes[size_t(level_major_offset(level) + index)];
}

void HierarchyReport::check_invariants() const {
  topo.validate();
  const int classes = int(class_names.size());
  long leaf_total = 0;
  for (int leaf = 0; leaf < topo.num_leaves(); ++leaf) {
    const auto& n = node(topo.depth, leaf);
    for (long c : n.class_counts) leaf_total += c;
    if (int(n.class_counts.size()) != classes)
      throw internal_error("hierarchy: class count width mismatch");
  }
  if (leaf_total != total_samples)
    throw internal_error("hierarchy: leaf class counts do not sum to the dataset size");
  for (int t = 0; t < topo.depth; ++t) {
    for (int i = 0; i < (1 << t); ++i) {
      const auto& parent = node(t, i);
      const auto& left = node(t + 1, 2 * i);
      const auto& right = node(t + 1, 2 * i + 1);
      if (std::abs(parent.reach_fraction - left.reach_fraction - right.reach_fraction) > 1e-6)
        throw internal_error("hierarchy: reach fractions inconsistent with child sums");
      for (int c = 0; c < classes; ++c)
        if (parent.class_counts[c] != left.class_counts[c] + right.class_counts[c])
          throw internal_error("hierarchy: class counts inconsistent with child sums");
    }
  }
}

HierarchyReport build_hierarchy_report(const LabeledAssignment& assignment,
                                       const std::vector<VecXd>& mean_level_posteriors,
                                       std::vector<std::string> class_names) {
  assignment.validate();
  const TreeTopology& topo = assignment.topo;
  if (int(mean_level_posteriors.size()) != topo.depth + 1)
    throw std::invalid_argument("hierarchy: need mean posteriors for every level 0..T");

  HierarchyReport report;
  report.topo = topo;
  report.total_samples = long(assignment.leaf.size());
  const int classes = assignment.num_classes();
  if (class_names.empty())
    for (int c = 0; c < classes; ++c) class_names.push_back("class-" + std::to_string(c));
  if (int(class_names.size()) < classes)
    throw std::invalid_argument("hierarchy: fewer class names than classes");
  report.class_names = std::move(class_names);

  const int total_nodes = (1 << (topo.depth + 1)) - 1;
  report.nodes.resize(total_nodes);

  // leaves first, then aggregate upward
  std::vector<std::vector<long>> counts(size_t(topo.num_leaves()),
                                        std::vector<long>(report.class_names.size(), 0));
  for (size_t i = 0; i < assignment.leaf.size(); ++i)
    counts[assignment.leaf[i]][assignment.label[i]] += 1;

  int next_cluster = 0;
  for (int t = topo.depth; t >= 0; --t) {
    const VecXd& mean_post = mean_level_posteriors[t];
    if (mean_post.size() != (1 << t))
      throw std::invalid_argument("hierarchy: mean posterior length mismatch at level " +
                                  std::to_string(t));
    for (int i = 0; i < (1 << t); ++i) {
      HierarchyNode& n = report.nodes[size_t(level_major_offset(t) + i)];
      n.level = t;
      n.index = i;
      n.active = topo.subtree_alive(t, i);
      n.reach_fraction = mean_post[i];
      if (t == topo.depth) {
        n.class_counts = counts[i];
        if (topo.active_leaf_mask[i]) n.cluster_id = next_cluster++;
      } else {
        const auto& left = report.nodes[size_t(level_major_offset(t + 1) + 2 * i)];
        const auto& right = report.nodes[size_t(level_major_offset(t + 1) + 2 * i + 1)];
        n.class_counts.resize(report.class_names.size());
        for (size_t c = 0; c < n.class_counts.size(); ++c)
          n.class_counts[c] = left.class_counts[c] + right.class_counts[c];
      }
    }
  }
  report.check_invariants();
  return report;
}

std::string hierarchy_to_json(const HierarchyReport& report) {
  nlohmann::ordered_json j;
  j["format"] = "cohiclust-tree";
  j["version"] = report.version;
  j["topology"] = report.topo.to_record();
  j["total_samples"] = report.total_samples;
  j["class_names"] = report.class_names;
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const auto& n : report.nodes) {
    nlohmann::ordered_json entry;
    entry["level"] = n.level;
    entry["index"] = n.index;
    entry["active"] = n.active;
    entry["reach_fraction"] = n.reach_fraction;
    entry["class_counts"] = n.class_counts;
    if (n.cluster_id >= 0) entry["cluster_id"] = n.cluster_id;
    nodes.push_back(std::move(entry));
  }
  j["nodes"] = std::move(nodes);
  return j.dump(2) + "\n";
}

HierarchyReport hierarchy_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("hierarchy: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "cohiclust-tree") throw format_error("hierarchy: wrong format tag");
    HierarchyReport report;
    report.version = j.at("version");
    report.topo = TreeTopology::from_record(j.at("topology"));
    report.total_samples = j.at("total_samples");
    report.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& entry : j.at("nodes")) {
      HierarchyNode n;
      n.level = entry.at("level");
      n.index = entry.at("index");
      n.active = entry.at("active");
      n.reach_fraction = entry.at("reach_fraction");
      n.class_counts = entry.at("class_counts").get<std::vector<long>>();
      n.cluster_id = entry.value("cluster_id", -1);
      report.nodes.push_back(std::move(n));
    }
    const int expected = (1 << (report.topo.depth + 1)) - 1;
    if (int(report.nodes.size()) != expected)
      throw format_error("hierarchy: node count does not match the topology");
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("hierarchy: missing field: ") + e.what());
  }
}

std::string hierarchy_to_dot(const HierarchyReport& report) {
  std::ostringstream out;
  out << "digraph cohiclust {\n  node [shape=box, fontsize=10];\n";
  auto node_name = [](int level, int index) {
    return "n" + std::to_string(level) + "_" + std::to_string(index);
  };
  for (const auto& n : report.nodes) {
    if (!n.active) continue;
    long total = 0;
    size_t dominant = 0;
    for (size_t c = 0; c < n.class_counts.size(); ++c) {
      total += n.class_counts[c];
      if (n.class_counts[c] > n.class_counts[dominant]) dominant = c;
    }
    std::ostringstream label;
    if (n.level == report.topo.depth) label << "cluster " << n.cluster_id << "\\n";
    label << (total > 0 ? report.class_names[dominant] : std::string("(empty)"));
    label.precision(3);
    label << "\\nreach " << std::fixed << n.reach_fraction;
    out << "  " << node_name(n.level, n.index) << " [label=\"" << label.str() << "\"";
    if (n.level == report.topo.depth) out << ", style=filled, fillcolor=lightblue";
    out << "];\n";
  }
  for (const auto& n : report.nodes) {
    if (!n.active || n.level == report.topo.depth) continue;
    for (int child = 0; child < 2; ++child) {
      const auto& c = report.node(n.level + 1, 2 * n.index + child);
      if (c.active)
        out << "  " << node_name(n.level, n.index) << " -> " << node_name(c.level, c.index)
            << ";\n";
    }
  }
  out << "}\n";
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot open '" + tmp + "' for writing");
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace cohiclust
