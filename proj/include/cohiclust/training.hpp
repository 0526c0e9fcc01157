#pragma once

// Training orchestration: the pre-training phase (R2 only), tree construction
// under the full objective, the one-leaf-per-epoch pruning schedule, and
// checkpointing. One logical training thread owns the model.

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "cohiclust/data.hpp"
#include "cohiclust/losses.hpp"
#include "cohiclust/metrics.hpp"
#include "cohiclust/model.hpp"

namespace cohiclust {

struct OptimizerSettings {
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
};

struct TrainSchedule {
  int pretrain_epochs = 30;
  int tree_epochs = 30;
  int prune_start_epoch = 10;  // relative to the tree phase
  int target_leaves = 8;
  int batch_size = 128;
  OptimizerSettings optimizer;
  int eval_every = 1;  // metric cadence in epochs; 0 = only at the end

  void validate(int tree_depth) const {
    const int leaves = 1 << tree_depth;
    if (target_leaves < 2) throw std::invalid_argument("schedule.target_leaves must be >= 2");
    if (target_leaves > leaves)
      throw std::invalid_argument("schedule.target_leaves exceeds 2^depth = " +
                                  std::to_string(leaves));
    if (pretrain_epochs < 0 || tree_epochs < 0)
      throw std::invalid_argument("schedule: epoch counts must be >= 0");
    if (prune_start_epoch < 0)
      throw std::invalid_argument("schedule.prune_start_epoch must be >= 0");
    if (target_leaves < leaves &&
        prune_start_epoch + (leaves - target_leaves) > tree_epochs)
      throw std::invalid_argument(
          "schedule: pruning window does not fit (prune_start_epoch + leaves_to_remove must be "
          "<= tree_epochs)");
    if (batch_size < 2) throw std::invalid_argument("schedule.batch_size must be >= 2");
    if (optimizer.learning_rate < 0) throw std::invalid_argument("schedule.learning_rate < 0");
  }
};

// Named defaults mirroring the published configurations, plus a desk-scale one.
struct Profile {
  std::string name;
  int tree_depth = 3;
  TrainSchedule schedule;
  std::string encoder_arch;  // suggestion only; config may override
};

inline Profile named_profile(const std::string& name) {
  Profile p;
  p.name = name;
  if (name == "desk-scale") {
    p.tree_depth = 3;
    p.encoder_arch = "mlp-small";
    p.schedule.pretrain_epochs = 30;
    p.schedule.tree_epochs = 30;
    p.schedule.batch_size = 128;
    p.schedule.prune_start_epoch = 10;
    p.schedule.target_leaves = 8;
    return p;
  }
  if (name == "grayscale") {
    p.tree_depth = 4;  // 16 leaves, pruned to 10 in tree epochs 10-15
    p.encoder_arch = "resnet18";
    p.schedule.pretrain_epochs = 200;
    p.schedule.tree_epochs = 100;
    p.schedule.batch_size = 256;
    p.schedule.prune_start_epoch = 10;
    p.schedule.target_leaves = 10;
    return p;
  }
  if (name == "cifar-like") {
    p.tree_depth = 5;  // 32 leaves
    p.encoder_arch = "resnet50";
    p.schedule.pretrain_epochs = 1000;
    p.schedule.tree_epochs = 500;
    p.schedule.batch_size = 512;
    p.schedule.prune_start_epoch = 50;
    p.schedule.target_leaves = 20;
    return p;
  }
  throw std::invalid_argument("profile: unknown profile '" + name +
                              "' (desk-scale, grayscale, cifar-like)");
}

enum class Phase { pretrain, tree, done };

inline std::string to_string(Phase p) {
  switch (p) {
    case Phase::pretrain: return "pretrain";
    case Phase::tree: return "tree";
    case Phase::done: return "done";
  }
  return "?";
}

inline Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::pretrain;
  if (s == "tree") return Phase::tree;
  if (s == "done") return Phase::done;
  throw format_error("unknown phase '" + s + "'");
}

// Lowest-mass active leaf, ties resolved toward the lowest index.
inline int argmin_active_leaf(const VecXd& mass, const TreeTopology& topo) {
  if (mass.size() != topo.num_leaves())
    throw std::invalid_argument("leaf mass length does not match the topology");
  int victim = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int leaf = 0; leaf < topo.num_leaves(); ++leaf) {
    if (!topo.leaf_active(leaf)) continue;
    if (mass[leaf] < best) {
      best = mass[leaf];
      victim = leaf;
    }
  }
  if (victim < 0) throw internal_error("argmin_active_leaf: no active leaf");
  return victim;
}

struct StepRecord {
  long step = 0;
  int epoch = 0;
  Phase phase = Phase::pretrain;
  LossBreakdown losses;
  int active_leaves = 0;
};

struct EpochRecord {
  int epoch = 0;           // global epoch counter across phases
  int epoch_in_phase = 0;
  Phase phase = Phase::pretrain;
  LossBreakdown losses;    // epoch means
  int active_leaves = 0;
  int pruned_leaf = -1;
  double pruned_mass = 0;
  bool has_metrics = false;
  double nmi = 0, acc = 0, ari = 0, dp = 0;
};

namespace ckpt {

constexpr char kMagic[8] = {'C', 'O', 'H', 'I', 'C', 'K', 'P', '1'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '!'};

template <class S>
const char* scalar_tag() {
  return sizeof(S) == 4 ? "f32" : "f64";
}

}  // namespace ckpt

template <class S>
class Trainer {
 public:
  Trainer(CoHiModel<S> model, TreeTopology topo, TrainSchedule schedule, LossConfig loss,
          Dataset data, AugmentationPolicy policy, uint64_t seed)
      : model_(std::move(model)),
        topo_(std::move(topo)),
        schedule_(schedule),
        loss_(loss),
        data_(std::move(data)),
        policy_(std::move(policy)),
        seed_(seed) {
    schedule_.validate(model_.tree_depth);
    loss_.validate();
    if (topo_.depth != model_.tree_depth)
      throw std::invalid_argument("trainer: topology depth does not match the model");
    if (data_.size() < schedule_.batch_size)
      throw std::invalid_argument("trainer: dataset smaller than the batch size");
    optimizer_.lr = schedule_.optimizer.learning_rate;
    optimizer_.weight_decay = schedule_.optimizer.weight_decay;
    phase_ = schedule_.pretrain_epochs > 0 ? Phase::pretrain
             : schedule_.tree_epochs > 0  ? Phase::tree
                                          : Phase::done;
  }

  const TreeTopology& topology() const { return topo_; }
  CoHiModel<S>& model() { return model_; }
  const Dataset& dataset() const { return data_; }
  Phase phase() const { return phase_; }
  int epoch_in_phase() const { return phase_ == Phase::pretrain ? pretrain_done_ : tree_done_; }
  int pretrain_epochs_done() const { return pretrain_done_; }
  int tree_epochs_done() const { return tree_done_; }
  int global_epoch() const { return global_epoch_; }
  long global_step() const { return global_step_; }
  const TrainSchedule& schedule() const { return schedule_; }
  const LossConfig& loss_config() const { return loss_; }
  uint64_t seed() const { return seed_; }
  const std::vector<EpochRecord>& history() const { return history_; }

  std::function<void(const StepRecord&)> on_step;
  std::string checkpoint_on_error;  // emergency checkpoint target, empty = none

  // One fused forward/backward over a pair batch; returns the breakdown.
  // Pretrain runs the R2 path only and leaves the router untouched.
  LossBreakdown train_step(const MatX<S>& anchors, const MatX<S>& views, bool pretrain_only,
                           bool apply_update) {
    const int batch = int(anchors.rows());
    MatX<S> joined(2 * batch, anchors.cols());
    joined.topRows(batch) = anchors;
    joined.bottomRows(batch) = views;
    auto params = pretrain_only ? model_.pretrain_params() : model_.all_params();
    zero_grads(params);

    MatX<S> z = model_.encode(joined, true);
    LossBreakdown breakdown;
    MatX<S> gz = MatX<S>::Zero(z.rows(), z.cols());

    const double beta1 = loss_.resolved_beta1(topo_.depth);
    const double beta2 = loss_.beta2;

    if (!pretrain_only) {
      MatX<S> probs = model_.route(z);
      auto rta = route_tree<S>(probs.topRows(batch), topo_);
      auto rtv = route_tree<S>(probs.bottomRows(batch), topo_);
      std::vector<MatX<S>> gla, glv;
      MatX<S> gea = MatX<S>::Zero(batch, topo_.num_internal());
      MatX<S> gev = MatX<S>::Zero(batch, topo_.num_internal());
      breakdown.cohi = double(cohi_loss_impl<S>(rta, rtv, topo_, loss_, S(1), &gla, &glv));
      breakdown.r1 = double(r1_balance_impl<S>(rta, rtv, topo_, loss_.epsilon, S(beta1), &gla,
                                               &glv, &gea, &gev));
      MatX<S> grad_probs(2 * batch, topo_.num_internal());
      grad_probs.topRows(batch) = route_tree_backward<S>(rta, topo_, gla, gea);
      grad_probs.bottomRows(batch) = route_tree_backward<S>(rtv, topo_, glv, gev);
      gz += model_.router->backward(grad_probs);
    }

    {
      MatX<S> c = model_.contrast_embed(z, true);
      const double r2_scale = pretrain_only ? 1.0 : beta2;
      if (r2_scale > 0) {
        MatX<S> gca, gcv;
        breakdown.r2 = double(ntxent_impl<S>(MatX<S>(c.topRows(batch)),
                                             MatX<S>(c.bottomRows(batch)), loss_.temperature,
                                             S(r2_scale), &gca, &gcv));
        MatX<S> gc(2 * batch, c.cols());
        gc.topRows(batch) = gca;
        gc.bottomRows(batch) = gcv;
        gz += model_.contrast->backward(gc);
      } else {
        // weighted out of the objective; still reported in the breakdown
        breakdown.r2 = double(ntxent<S>(MatX<S>(c.topRows(batch)), MatX<S>(c.bottomRows(batch)),
                                        loss_.temperature));
      }
    }

    model_.encoder->backward(gz);
    breakdown.total = pretrain_only
                          ? breakdown.r2
                          : breakdown.cohi + beta1 * breakdown.r1 + beta2 * breakdown.r2;
    if (apply_update) optimizer_.step(params);
    return breakdown;
  }

  void pretrain_epoch() {
    if (phase_ != Phase::pretrain) throw invalid_state_error("pretrain_epoch: phase is not pretrain");
    run_epoch(true);
    advance_phase();
  }

  void tree_epoch() {
    if (phase_ != Phase::tree) throw invalid_state_error("tree_epoch: phase is not tree");
    if (tree_done_ >= schedule_.prune_start_epoch &&
        topo_.active_leaf_count() > schedule_.target_leaves) {
      pending_prune_ = true;  // executed at epoch start inside run_epoch
    }
    run_epoch(false);
    advance_phase();
  }

  // Expected leaf mass over the full training set, eval mode, no augmentation.
  VecXd mean_leaf_mass() {
    VecXd mass = VecXd::Zero(topo_.num_leaves());
    const int chunk = 512;
    for (int start = 0; start < data_.size(); start += chunk) {
      const int n = std::min(chunk, data_.size() - start);
      MatX<S> x = data_.features.middleRows(start, n).template cast<S>();
      MatX<S> probs = model_.route(model_.encode(x, false));
      auto rt = route_tree<S>(probs, topo_);
      mass += rt.level_post[topo_.depth].template cast<double>().colwise().sum().transpose();
    }
    return mass / double(data_.size());
  }

  // Prunes the active leaf with the lowest expected mass (ties: lowest index).
  std::pair<int, double> prune_step() {
    if (topo_.active_leaf_count() <= schedule_.target_leaves)
      throw invalid_state_error("prune_step: already at the target leaf count");
    const VecXd mass = mean_leaf_mass();
    const int victim = argmin_active_leaf(mass, topo_);
    topo_ = prune_leaf(topo_, victim);
    return {victim, mass[victim]};
  }

  // Dataset-mean P_t for every level, eval mode (hierarchy reach fractions).
  std::vector<VecXd> mean_level_posteriors() {
    std::vector<VecXd> mean(topo_.depth + 1);
    for (int t = 0; t <= topo_.depth; ++t) mean[t] = VecXd::Zero(1 << t);
    const int chunk = 512;
    for (int start = 0; start < data_.size(); start += chunk) {
      const int n = std::min(chunk, data_.size() - start);
      MatX<S> x = data_.features.middleRows(start, n).template cast<S>();
      MatX<S> probs = model_.route(model_.encode(x, false));
      auto rt = route_tree<S>(probs, topo_);
      for (int t = 0; t <= topo_.depth; ++t)
        mean[t] += rt.level_post[t].template cast<double>().colwise().sum().transpose();
    }
    for (int t = 0; t <= topo_.depth; ++t) mean[t] /= double(data_.size());
    return mean;
  }

  std::vector<int> assign_all() {
    std::vector<int> leaves(data_.size());
    const int chunk = 512;
    for (int start = 0; start < data_.size(); start += chunk) {
      const int n = std::min(chunk, data_.size() - start);
      MatX<S> x = data_.features.middleRows(start, n).template cast<S>();
      MatX<S> probs = model_.route(model_.encode(x, false));
      auto rt = route_tree<S>(probs, topo_);
      MatXd post = rt.level_post[topo_.depth].template cast<double>();
      for (int i = 0; i < n; ++i)
        leaves[start + i] = assign_cluster(post.row(i).transpose(), topo_);
    }
    return leaves;
  }

  LabeledAssignment labeled_assignment() {
    LabeledAssignment a;
    a.leaf = assign_all();
    a.label = data_.labels;
    a.topo = topo_;
    return a;
  }

  void attach_metrics(EpochRecord& record) {
    auto a = labeled_assignment();
    record.has_metrics = true;
    record.nmi = nmi(a);
    record.acc = acc(a);
    record.ari = ari(a);
    record.dp = dendrogram_purity(a);
  }

  // Full schedule; callback fires after every epoch (metrics included per
  // eval_every and on the final epoch of each phase).
  void run(const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    while (phase_ != Phase::done) {
      const bool pretraining = phase_ == Phase::pretrain;
      if (pretraining)
        pretrain_epoch();
      else
        tree_epoch();
      EpochRecord& record = history_.back();
      const bool last_of_phase = phase_ != (pretraining ? Phase::pretrain : Phase::tree);
      const bool eval_now =
          schedule_.eval_every > 0
              ? (record.epoch_in_phase % schedule_.eval_every == schedule_.eval_every - 1 ||
                 last_of_phase)
              : (last_of_phase && phase_ == Phase::done);
      if (eval_now) attach_metrics(record);
      if (on_epoch) on_epoch(record);
    }
  }

  void save_checkpoint(const std::string& path) {
    namespace fs = std::filesystem;
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::invalid_argument("checkpoint: cannot open '" + tmp + "'");
      out.write(ckpt::kMagic, 8);
      const std::string header = checkpoint_header();
      const uint64_t len = header.size();
      out.write(reinterpret_cast<const char*>(&len), 8);
      out.write(header.data(), std::streamsize(header.size()));
      auto params = model_.all_params();
      for (auto* p : params) {
        write_blob(out, p->value);
        ensure_moments(*p);
        write_blob(out, p->m);
        write_blob(out, p->v);
        const int64_t steps = p->steps;
        out.write(reinterpret_cast<const char*>(&steps), 8);
      }
      for (auto* buffer : model_.state_buffers()) write_blob(out, *buffer);
      out.write(ckpt::kTrailer, 4);
      if (!out) throw std::runtime_error("checkpoint: write failed for '" + tmp + "'");
    }
    fs::rename(tmp, path);
  }

  // Inference-only restore: a no-op schedule sized to the stored tree.
  static Trainer restore_checkpoint(const std::string& path, Dataset data,
                                    AugmentationPolicy policy) {
    return restore_checkpoint(path, std::move(data), std::move(policy), std::nullopt,
                              LossConfig{});
  }

  static Trainer restore_checkpoint(const std::string& path, Dataset data,
                                    AugmentationPolicy policy, TrainSchedule schedule,
                                    LossConfig loss) {
    return restore_checkpoint(path, std::move(data), std::move(policy),
                              std::optional<TrainSchedule>(schedule), loss);
  }

  static Trainer restore_checkpoint(const std::string& path, Dataset data,
                                    AugmentationPolicy policy,
                                    std::optional<TrainSchedule> schedule_opt, LossConfig loss) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, ckpt::kMagic, 8) != 0)
      throw format_error("checkpoint: bad magic in '" + path + "'");
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || len > (1ull << 30)) throw format_error("checkpoint: corrupt header length");
    std::string header(len, '\0');
    in.read(header.data(), std::streamsize(len));
    if (!in) throw format_error("checkpoint: truncated header");

    Restored meta = parse_header(header);
    if (meta.scalar != ckpt::scalar_tag<S>())
      throw format_error("checkpoint: stored scalar " + meta.scalar + ", this build expects " +
                         std::string(ckpt::scalar_tag<S>()));
    TrainSchedule schedule;
    if (schedule_opt) {
      schedule = *schedule_opt;
    } else {
      schedule.pretrain_epochs = 0;
      schedule.tree_epochs = 0;
      schedule.prune_start_epoch = 0;
      schedule.target_leaves = 1 << meta.tree_depth;
      schedule.batch_size = 2;
    }
    auto model = CoHiModel<S>::build(meta.encoder, meta.tree_depth, meta.contrast_mode,
                                     meta.contrast_dim, meta.seed);
    Trainer trainer(std::move(model), meta.topology, schedule, loss, std::move(data),
                    std::move(policy), meta.seed);
    trainer.pretrain_done_ = meta.pretrain_done;
    trainer.tree_done_ = meta.tree_done;
    trainer.global_epoch_ = meta.global_epoch;
    trainer.global_step_ = meta.global_step;
    // progress counters are authoritative; the phase follows the schedule in
    // force now, so a longer schedule reopens training
    trainer.phase_ = trainer.pretrain_done_ < schedule.pretrain_epochs ? Phase::pretrain
                     : trainer.tree_done_ < schedule.tree_epochs       ? Phase::tree
                                                                       : Phase::done;

    auto params = trainer.model_.all_params();
    if (params.size() != meta.param_shapes.size())
      throw format_error("checkpoint: parameter manifest mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      if (meta.param_shapes[i].first != p->value.rows() ||
          meta.param_shapes[i].second != p->value.cols())
        throw format_error("checkpoint: shape mismatch for parameter " + p->name);
      read_blob(in, path, p->value);
      ensure_moments(*p);
      read_blob(in, path, p->m);
      read_blob(in, path, p->v);
      int64_t steps = 0;
      in.read(reinterpret_cast<char*>(&steps), 8);
      if (!in) throw format_error("checkpoint: truncated at parameter " + p->name);
      p->steps = steps;
    }
    for (auto* buffer : trainer.model_.state_buffers()) read_blob(in, path, *buffer);
    char trailer[4];
    in.read(trailer, 4);
    if (!in || std::memcmp(trailer, ckpt::kTrailer, 4) != 0)
      throw format_error("checkpoint: truncated archive '" + path + "'");
    return trainer;
  }

 private:
  struct Restored {
    EncoderSpec encoder;
    int tree_depth = 1;
    ContrastMode contrast_mode = ContrastMode::identity;
    int contrast_dim = 0;
    TreeTopology topology;
    int pretrain_done = 0, tree_done = 0, global_epoch = 0;
    long global_step = 0;
    uint64_t seed = 0;
    std::string scalar;
    std::vector<std::pair<long, long>> param_shapes;
  };

  std::string checkpoint_header();          // defined in checkpoint_json.hpp
  static Restored parse_header(const std::string& json_text);

  static void ensure_moments(Param<S>& p) {
    if (p.m.size() == 0) {
      p.m = MatX<S>::Zero(p.value.rows(), p.value.cols());
      p.v = MatX<S>::Zero(p.value.rows(), p.value.cols());
    }
  }

  static void write_blob(std::ofstream& out, const MatX<S>& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              std::streamsize(sizeof(S) * size_t(m.size())));
  }

  static void read_blob(std::ifstream& in, const std::string& path, MatX<S>& m) {
    in.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(S) * size_t(m.size())));
    if (!in) throw format_error("checkpoint: truncated blob in '" + path + "'");
  }

  void run_epoch(bool pretraining) {
    EpochRecord record;
    record.phase = phase_;
    record.epoch = global_epoch_;
    record.epoch_in_phase = epoch_in_phase();
    if (pending_prune_) {
      pending_prune_ = false;
      auto [leaf, mass] = prune_step();
      record.pruned_leaf = leaf;
      record.pruned_mass = mass;
    }
    record.active_leaves = topo_.active_leaf_count();

    const int batches = std::max(1, data_.size() / schedule_.batch_size);
    LossBreakdown sum;
    try {
      for (int b = 0; b < batches; ++b) {
        auto rng = derive_rng(seed_, uint64_t(phase_ == Phase::pretrain ? 1 : 2),
                              uint64_t(global_epoch_), uint64_t(b));
        auto batch = make_pair_batch(data_, policy_, schedule_.batch_size, rng);
        auto breakdown = train_step(batch.anchors.template cast<S>(),
                                    batch.views.template cast<S>(), pretraining, true);
        sum.cohi += breakdown.cohi;
        sum.r1 += breakdown.r1;
        sum.r2 += breakdown.r2;
        sum.total += breakdown.total;
        global_step_ += 1;
        if (on_step)
          on_step(StepRecord{global_step_, global_epoch_, phase_, breakdown,
                             topo_.active_leaf_count()});
      }
    } catch (const numeric_error&) {
      if (!checkpoint_on_error.empty()) save_checkpoint(checkpoint_on_error);
      throw;
    }
    record.losses.cohi = sum.cohi / batches;
    record.losses.r1 = sum.r1 / batches;
    record.losses.r2 = sum.r2 / batches;
    record.losses.total = sum.total / batches;
    history_.push_back(record);
    (phase_ == Phase::pretrain ? pretrain_done_ : tree_done_) += 1;
    global_epoch_ += 1;
  }

  void advance_phase() {
    if (phase_ == Phase::pretrain && pretrain_done_ >= schedule_.pretrain_epochs)
      phase_ = tree_done_ < schedule_.tree_epochs ? Phase::tree : Phase::done;
    else if (phase_ == Phase::tree && tree_done_ >= schedule_.tree_epochs)
      phase_ = Phase::done;
  }

  CoHiModel<S> model_;
  TreeTopology topo_;
  TrainSchedule schedule_;
  LossConfig loss_;
  Dataset data_;
  AugmentationPolicy policy_;
  uint64_t seed_;
  Adam<S> optimizer_;
  Phase phase_ = Phase::pretrain;
  int pretrain_done_ = 0, tree_done_ = 0;
  int global_epoch_ = 0;
  long global_step_ = 0;
  bool pending_prune_ = false;
  std::vector<EpochRecord> history_;
};

}  // namespace cohiclust

#include "cohiclust/checkpoint_json.hpp"
