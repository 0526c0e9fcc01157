// CoHiClust command line: train a soft-tree clustering model, evaluate it
// against held-out labels, export the learned hierarchy, and render plots.
// Training runs in float32; see tests/ for the double-precision checks.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cohiclust/config.hpp"
#include "cohiclust/hierarchy.hpp"
#include "cohiclust/plot.hpp"
#include "cohiclust/training.hpp"

namespace fs = std::filesystem;
using namespace cohiclust;

namespace {

using TrainerF = Trainer<float>;

nlohmann::ordered_json epoch_json(const EpochRecord& rec) {
  nlohmann::ordered_json j;
  j["type"] = "epoch";
  j["epoch"] = rec.epoch;
  j["epoch_in_phase"] = rec.epoch_in_phase;
  j["phase"] = to_string(rec.phase);
  j["cohi"] = rec.losses.cohi;
  j["r1"] = rec.losses.r1;
  j["r2"] = rec.losses.r2;
  j["total"] = rec.losses.total;
  j["active_leaves"] = rec.active_leaves;
  if (rec.pruned_leaf >= 0) {
    j["pruned_leaf"] = rec.pruned_leaf;
    j["pruned_mass"] = rec.pruned_mass;
  }
  if (rec.has_metrics) {
    j["nmi"] = rec.nmi;
    j["acc"] = rec.acc;
    j["ari"] = rec.ari;
    j["dp"] = rec.dp;
  }
  return j;
}

// --data accepts a run-config JSON, a bare dataset-spec JSON, or a directory
// of canonical IDX files.
DatasetSpec dataset_spec_from_arg(const std::string& path) {
  if (fs::is_directory(path)) {
    DatasetSpec spec;
    spec.source = DataSource::idx_grayscale;
    spec.path = path;
    return spec;
  }
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("--data: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("--data: '" + path + "' is not valid JSON: " +
                                std::string(e.what()));
  }
  nlohmann::ordered_json wrapper;
  wrapper["dataset"] = j.contains("dataset") ? j.at("dataset") : j;
  return parse_run_config_text(wrapper.dump()).dataset;
}

int run_train(const std::string& config_path, const std::string& resume_path) {
  RunConfig config = parse_run_config_file(config_path);
  Dataset data = load_dataset(config.dataset);
  bind_encoder_to_dataset(config, data);
  AugmentationPolicy policy = resolve_policy(config, data);
  const std::string out_dir = resolve_output_dir(config);
  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();

  std::optional<TrainerF> trainer;
  if (!resume_path.empty()) {
    trainer.emplace(TrainerF::restore_checkpoint(resume_path, std::move(data), policy,
                                                 config.schedule, config.loss));
    std::cout << "resumed from " << resume_path << " at epoch " << trainer->global_epoch()
              << " (" << to_string(trainer->phase()) << ")\n";
  } else {
    auto model = CoHiModel<float>::build(config.encoder, config.tree_depth, config.contrast_mode,
                                         config.contrast_dim, config.seed);
    trainer.emplace(std::move(model), TreeTopology::complete(config.tree_depth), config.schedule,
                    config.loss, std::move(data), policy, config.seed);
  }
  trainer->checkpoint_on_error = (fs::path(out_dir) / "abort.ckpt").string();

  std::ofstream log(log_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot open log '" + log_path + "'");
  trainer->on_step = [&](const StepRecord& rec) {
    nlohmann::ordered_json j;
    j["type"] = "step";
    j["step"] = rec.step;
    j["epoch"] = rec.epoch;
    j["phase"] = to_string(rec.phase);
    j["cohi"] = rec.losses.cohi;
    j["r1"] = rec.losses.r1;
    j["r2"] = rec.losses.r2;
    j["total"] = rec.losses.total;
    j["active_leaves"] = rec.active_leaves;
    log << j.dump() << "\n";
  };

  const int ckpt_every = trainer->schedule().eval_every;  // 0 = final only
  trainer->run([&](const EpochRecord& rec) {
    log << epoch_json(rec).dump() << "\n";
    log.flush();
    std::cout << "epoch " << rec.epoch << " [" << to_string(rec.phase)
              << "] total=" << rec.losses.total << " leaves=" << rec.active_leaves;
    if (rec.has_metrics) std::cout << " nmi=" << rec.nmi << " acc=" << rec.acc;
    if (rec.pruned_leaf >= 0) std::cout << " pruned=" << rec.pruned_leaf;
    std::cout << "\n";
    if (ckpt_every > 0 && (rec.epoch + 1) % ckpt_every == 0)
      trainer->save_checkpoint((fs::path(out_dir) / "last.ckpt").string());
  });
  trainer->save_checkpoint((fs::path(out_dir) / "last.ckpt").string());

  trainer->save_checkpoint((fs::path(out_dir) / "final.ckpt").string());
  auto report = build_hierarchy_report(trainer->labeled_assignment(),
                                       trainer->mean_level_posteriors(),
                                       trainer->dataset().class_names);
  write_file_atomic((fs::path(out_dir) / "hierarchy.json").string(), hierarchy_to_json(report));
  std::cout << "artifacts written to " << out_dir << "\n";
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& out_dir_arg) {
  Dataset data = load_dataset(dataset_spec_from_arg(data_path));
  auto trainer = TrainerF::restore_checkpoint(ckpt_path, std::move(data),
                                              AugmentationPolicy::identity());
  auto assignment = trainer.labeled_assignment();
  const double v_nmi = nmi(assignment);
  const double v_acc = acc(assignment);
  const double v_ari = ari(assignment);
  const double v_dp = dendrogram_purity(assignment);
  auto distances = class_distance_matrix(assignment, trainer.dataset().class_names);

  const std::string out_dir =
      out_dir_arg.empty() ? fs::path(ckpt_path).parent_path().string() : out_dir_arg;
  const fs::path base = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  fs::create_directories(base);

  std::ostringstream metrics;
  const int epoch = trainer.global_epoch();
  for (auto& [name, value] : std::initializer_list<std::pair<const char*, double>>{
           {"nmi", v_nmi}, {"acc", v_acc}, {"ari", v_ari}, {"dp", v_dp}}) {
    nlohmann::ordered_json j;
    j["metric"] = name;
    j["value"] = value;
    j["epoch"] = epoch;
    j["split"] = "all";
    metrics << j.dump() << "\n";
  }
  write_file_atomic((base / "metrics.jsonl").string(), metrics.str());
  write_distance_csv((base / "distances.csv").string(), distances);

  std::cout << "samples:        " << assignment.leaf.size() << "\n";
  std::cout << "active leaves:  " << trainer.topology().active_leaf_count() << "\n";
  std::cout << "NMI " << v_nmi << "  ACC " << v_acc << "  ARI " << v_ari << "  DP " << v_dp
            << "\n";
  std::cout << "wrote " << (base / "metrics.jsonl").string() << " and "
            << (base / "distances.csv").string() << "\n";
  return 0;
}

int run_export(const std::string& ckpt_path, const std::string& data_path,
               const std::string& format, const std::string& out_path) {
  if (format != "json-tree" && format != "dot")
    throw std::invalid_argument("--format: expected 'json-tree' or 'dot', got '" + format + "'");
  HierarchyReport report;
  if (!data_path.empty()) {
    Dataset data = load_dataset(dataset_spec_from_arg(data_path));
    auto trainer = TrainerF::restore_checkpoint(ckpt_path, std::move(data),
                                                AugmentationPolicy::identity());
    report = build_hierarchy_report(trainer.labeled_assignment(),
                                    trainer.mean_level_posteriors(),
                                    trainer.dataset().class_names);
  } else {
    // checkpoint alone carries no sample statistics; use the hierarchy the
    // train command wrote next to it
    const fs::path sibling = fs::path(ckpt_path).parent_path() / "hierarchy.json";
    if (!fs::exists(sibling))
      throw std::invalid_argument("export: no --data given and '" + sibling.string() +
                                  "' not found; pass --data to recompute statistics");
    std::ifstream probe(ckpt_path, std::ios::binary);
    if (!probe) throw std::invalid_argument("export: cannot open '" + ckpt_path + "'");
    report = hierarchy_from_json(read_file(sibling.string()));
  }
  write_file_atomic(out_path,
                    format == "dot" ? hierarchy_to_dot(report) : hierarchy_to_json(report));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_plot(const std::string& input, const std::string& kind, const std::string& out_path) {
  if (kind != "curves" && kind != "heatmap")
    throw std::invalid_argument("--kind: expected 'curves' or 'heatmap', got '" + kind + "'");
  const std::string svg =
      kind == "curves" ? svg_learning_curves(input) : svg_distance_heatmap(input);
  write_file_atomic(out_path, svg);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoHiClust: contrastive hierarchical clustering with a soft decision tree"};
  app.require_subcommand(1);

  std::string config_path, resume_path;
  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  std::string ckpt_path, data_path, out_dir;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against labels");
  eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval->add_option("--data", data_path, "dataset: config JSON, spec JSON, or IDX directory")
      ->required();
  eval->add_option("--out", out_dir, "output directory (default: alongside the checkpoint)");

  std::string format = "json-tree", export_ckpt, export_data, export_out;
  auto* exp = app.add_subcommand("export", "export the learned hierarchy");
  exp->add_option("--ckpt", export_ckpt, "checkpoint path")->required();
  exp->add_option("--format", format, "json-tree|dot");
  exp->add_option("--data", export_data, "dataset for fresh statistics (optional)");
  exp->add_option("--out", export_out, "output file")->required();

  std::string plot_input, plot_kind = "curves", plot_out;
  auto* plot = app.add_subcommand("plot", "render a static SVG");
  plot->add_option("--input", plot_input, "train_log.jsonl or distances.csv")->required();
  plot->add_option("--kind", plot_kind, "curves|heatmap");
  plot->add_option("--out", plot_out, "output .svg")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_train(config_path, resume_path);
    if (eval->parsed()) return run_eval(ckpt_path, data_path, out_dir);
    if (exp->parsed()) return run_export(export_ckpt, export_data, format, export_out);
    if (plot->parsed()) return run_plot(plot_input, plot_kind, plot_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
