#pragma once

// Static SVG renderings of training artifacts: learning curves from a JSONL
// epoch log (phase boundaries marked) and class-distance heatmaps from CSV.
// Output bytes are deterministic for fixed inputs.

#include <string>

namespace cohiclust {

std::string svg_learning_curves(const std::string& log_path);
std::string svg_distance_heatmap(const std::string& csv_path);

}  // namespace cohiclust
