#pragma once

#include "tranclr/config.hpp"
#include "tranclr/dataset.hpp"
#include "tranclr/encoder.hpp"
#include "tranclr/mgmc.hpp"
#include "tranclr/softalign.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tranclr {

struct StepReport {
  double loss_intra = 0;
  double loss_inter = 0;
  double loss_cross = 0;
  double total = 0;
  int queue_fill = 0;
  bool aligned = false;  // false while the queue is warming up or every term is off

  bool operator==(const StepReport&) const = default;
};

/// Everything mutated by a training step.
struct TrainState {
  ModelPair<double> model;
  Vector<double> velocity;
  MemoryQueue<double> queue;
  int epoch = 0;        // completed epochs
  long long step = 0;   // completed steps
};

TrainState initial_state(const RunConfig& config, const JointGraph& graph);

/// Views, anchors and alignment pairs for one batch. Building a plan consumes
/// the step's random stream; evaluating it does not.
struct StepPlan {
  ViewBatch views;
  std::vector<AlignmentPair> intra;
  std::vector<AlignmentPair> inter;
  CrossLevel cross;
};

StepPlan plan_step(const std::vector<SkeletonSequence>& batch, Rng& rng, const RunConfig& config,
                   const BodyPartition& partition);

struct ObjectiveResult {
  StepReport report;
  Vector<double> online_grad;    // d(total)/d(online parameters)
  Vector<double> momentum_grad;  // always zero: keys and targets are constants
  Matrix<double> keys;           // momentum keys of the X~ views, to be enqueued
  Vector<double> online_stats;   // BatchNorm batch statistics of the online forward, if one ran
  Vector<double> momentum_stats; // BatchNorm batch statistics of the X~ key forward
};

/// Losses and online gradient of a plan against the current queue snapshot.
/// Per-level losses are means over the level's pairs; total is their sum.
ObjectiveResult evaluate_objective(const ModelPair<double>& model, const MemoryQueue<double>& queue,
                                   const StepPlan& plan, const RunConfig& config);

/// Plan, evaluate, SGD step on online parameters, momentum update, enqueue.
/// `ids` label the batch in the diagnostic raised on a non-finite loss.
StepReport train_step(const std::vector<SkeletonSequence>& batch, const std::vector<std::string>& ids,
                       TrainState& state, const RunConfig& config, const BodyPartition& partition, Rng& rng,
                       double lr);

struct PretrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  int stop_after_epoch = -1;  // stop once this many epochs are complete (-1: run to the end)
  std::string layout = kLayoutSynthetic;
  bool verbose = false;
};

struct PretrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  TrainState state;
};

/// Self-supervised pretraining over `train` (labels unused). Writes
/// metrics.jsonl and checkpoints into options.out_dir.
PretrainResult pretrain(const std::vector<LabeledSequence>& train, const RunConfig& config,
                        const PretrainOptions& options);

}  // namespace tranclr
