#include "cohiclust/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "cohiclust/common.hpp"
#include "cohiclust/metrics.hpp"

namespace cohiclust {

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

struct CurvePoint {
  int epoch;
  double value;
};

struct Series {
  std::string label;
  std::string color;
  std::vector<CurvePoint> points;
};

void polyline(std::ostringstream& svg, const Series& series, double x0, double y0, double width,
              double height, double xmin, double xmax, double ymin, double ymax) {
  if (series.points.empty()) return;
  svg << "<polyline fill=\"none\" stroke=\"" << series.color << "\" stroke-width=\"1.5\" points=\"";
  for (const auto& p : series.points) {
    const double x = x0 + (p.epoch - xmin) / std::max(1e-9, xmax - xmin) * width;
    const double y = y0 + height - (p.value - ymin) / std::max(1e-9, ymax - ymin) * height;
    svg << fmt(x) << "," << fmt(y) << " ";
  }
  svg << "\"/>\n";
}

}  // namespace

std::string svg_learning_curves(const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw std::invalid_argument("plot: cannot open '" + log_path + "'");

  Series loss{"total loss", "#c0392b", {}};
  Series nmi_series{"NMI", "#2471a3", {}};
  int tree_start = -1;
  std::vector<int> prune_epochs;
  int max_epoch = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw format_error(log_path + ": bad JSONL record: " + e.what());
    }
    if (j.value("type", "") != "epoch") continue;
    const int epoch = j.at("epoch");
    max_epoch = std::max(max_epoch, epoch);
    loss.points.push_back({epoch, j.at("total")});
    if (j.contains("nmi")) nmi_series.points.push_back({epoch, j.at("nmi")});
    if (j.value("phase", "") == "tree" && tree_start < 0) tree_start = epoch;
    if (j.value("pruned_leaf", -1) >= 0) prune_epochs.push_back(epoch);
  }
  if (loss.points.empty()) throw std::invalid_argument("plot: no epoch records in '" + log_path + "'");

  double lo = loss.points.front().value, hi = lo;
  for (const auto& p : loss.points) {
    lo = std::min(lo, p.value);
    hi = std::max(hi, p.value);
  }
  if (hi - lo < 1e-9) hi = lo + 1;

  const double width = 760, height = 420, x0 = 60, y0 = 30;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"860\" height=\"520\" "
         "viewBox=\"0 0 860 520\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"860\" height=\"520\" fill=\"white\"/>\n";
  svg << "<text x=\"430\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">learning curves"
         "</text>\n";
  // axes
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 + height << "\" x2=\"" << x0 + width
      << "\" y2=\"" << y0 + height << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y0 + height
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << x0 + width / 2 << "\" y=\"" << y0 + height + 35
      << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";

  // phase boundary and prune markers
  auto vline = [&](int epoch, const std::string& color, const std::string& label) {
    const double x = x0 + double(epoch) / std::max(1, max_epoch) * width;
    svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << y0 << "\" x2=\"" << fmt(x) << "\" y2=\""
        << y0 + height << "\" stroke=\"" << color << "\" stroke-dasharray=\"4,3\"/>\n";
    if (!label.empty())
      svg << "<text x=\"" << fmt(x + 3) << "\" y=\"" << y0 + 12 << "\" font-size=\"10\" fill=\""
          << color << "\">" << label << "</text>\n";
  };
  if (tree_start >= 0) vline(tree_start, "#7d3c98", "pretrain&#8594;tree");
  for (size_t i = 0; i < prune_epochs.size(); ++i)
    vline(prune_epochs[i], "#1e8449", i == 0 ? "prune" : "");

  polyline(svg, loss, x0, y0, width, height, 0, max_epoch, lo, hi);
  if (!nmi_series.points.empty()) polyline(svg, nmi_series, x0, y0, width, height, 0, max_epoch, 0, 1);

  // y labels: loss range left, nmi right
  svg << "<text x=\"12\" y=\"" << y0 + 10 << "\" font-size=\"10\" fill=\"#c0392b\">" << fmt(hi)
      << "</text>\n";
  svg << "<text x=\"12\" y=\"" << y0 + height << "\" font-size=\"10\" fill=\"#c0392b\">" << fmt(lo)
      << "</text>\n";
  svg << "<text x=\"" << x0 + width - 120 << "\" y=\"" << y0 + height + 35
      << "\" font-size=\"11\" fill=\"#c0392b\">total loss</text>\n";
  svg << "<text x=\"" << x0 + width - 40 << "\" y=\"" << y0 + height + 35
      << "\" font-size=\"11\" fill=\"#2471a3\">NMI</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string svg_distance_heatmap(const std::string& csv_path) {
  const auto matrix = read_distance_csv(csv_path);
  const int n = int(matrix.class_names.size());
  const double cell = std::min(48.0, 520.0 / n);
  const double x0 = 120, y0 = 60;
  const double dmax = std::max(1e-9, matrix.distances.maxCoeff());

  std::ostringstream svg;
  const double total_w = x0 + n * cell + 40, total_h = y0 + n * cell + 40;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(total_w) << "\" height=\""
      << fmt(total_h) << "\" viewBox=\"0 0 " << fmt(total_w) << " " << fmt(total_h) << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << fmt(total_w) << "\" height=\"" << fmt(total_h)
      << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt(x0 + n * cell / 2) << "\" y=\"24\" text-anchor=\"middle\" "
         "font-size=\"14\">class distance matrix (tree edges)</text>\n";
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double v = matrix.distances(r, c) / dmax;
      // near = light yellow, far = dark blue
      const int red = int(std::lround(255 * (1 - v * 0.85)));
      const int green = int(std::lround(245 * (1 - v * 0.75)));
      const int blue = int(std::lround(200 * (1 - v * 0.1)));
      svg << "<rect x=\"" << fmt(x0 + c * cell) << "\" y=\"" << fmt(y0 + r * cell) << "\" width=\""
          << fmt(cell) << "\" height=\"" << fmt(cell) << "\" fill=\"rgb(" << red << "," << green
          << "," << blue << ")\" stroke=\"#888\" stroke-width=\"0.5\"/>\n";
      svg << "<text x=\"" << fmt(x0 + c * cell + cell / 2) << "\" y=\""
          << fmt(y0 + r * cell + cell / 2 + 3) << "\" text-anchor=\"middle\" font-size=\""
          << fmt(std::min(11.0, cell / 3)) << "\">" << fmt(std::round(matrix.distances(r, c) * 100) / 100)
          << "</text>\n";
    }
  }
  for (int i = 0; i < n; ++i) {
    svg << "<text x=\"" << fmt(x0 - 6) << "\" y=\"" << fmt(y0 + i * cell + cell / 2 + 3)
        << "\" text-anchor=\"end\" font-size=\"11\">" << matrix.class_names[i] << "</text>\n";
    svg << "<text x=\"" << fmt(x0 + i * cell + cell / 2) << "\" y=\"" << fmt(y0 - 8)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << matrix.class_names[i] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace cohiclust
