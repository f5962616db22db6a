#pragma once

// Two-stage open-world training per task: pre-training with the binary
// objectness head, open-world learning with multi-view self-labeling, and the
// incremental step with distillation and exemplar replay.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "owdetr/config.hpp"
#include "owdetr/dataset.hpp"
#include "owdetr/detector.hpp"
#include "owdetr/metrics.hpp"

namespace owdetr {

/// Append-only JSON-lines record of a run.
class TrainLog {
 public:
  void record(const std::string& json_line) { lines_.push_back(json_line); }
  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const;
  void append(const TrainLog& other);

 private:
  std::vector<std::string> lines_;
};

/// Per-epoch averages of the loss components of one stage.
struct EpochStats {
  int epoch = 0;
  double lr = 0;
  std::map<std::string, double> mean;
};

struct StageReport {
  std::vector<EpochStats> epochs;
  /// Pseudo targets emitted and hygiene violations seen during owl training.
  std::size_t pseudo_targets = 0;
  std::size_t pseudo_violations = 0;
};

/// Selective-search proposals per image id, computed on demand.
class ProposalCache {
 public:
  explicit ProposalCache(SelectiveSearchConfig config) : config_(config) {}
  const std::vector<BoxCXCYWH>& get(const SceneImage& image);

 private:
  SelectiveSearchConfig config_;
  std::map<int, std::vector<BoxCXCYWH>> cache_;
};

/// Per-class balanced image subset. Images count toward every class they contain.
struct ExemplarStore {
  int cap = 50;
  std::vector<SceneImage> images;
  std::map<int, int> instances;  // class -> stored annotated instances
};

ExemplarStore exemplar_select_balanced(std::span<const SceneImage* const> pool,
                                       const std::vector<int>& classes, int cap,
                                       std::uint64_t seed);

/// Rebalances the store over its current images plus the given task images
/// for the classes known at `task`.
ExemplarStore refresh_exemplars(const ExemplarStore& store,
                                std::span<const SceneImage* const> images,
                                const TaskSchedule& schedule, std::size_t task,
                                const RunConfig& config, TrainLog& log);

Detector make_detector(const RunConfig& config, std::size_t num_known);

/// Teacher predictions whose best previous-class probability exceeds the
/// threshold and whose box does not intersect any current annotation. The
/// returned targets carry the teacher's class and its query index as pair_key.
std::vector<Target> select_teacher_pseudo_gt(std::span<const Prediction> teacher_preds,
                                             std::span<const Target> known_gt,
                                             double threshold, std::size_t num_previous);

/// Top-k predictions by the sigmoid score of their argmax slot; the last slot
/// is reported as kUnknownLabel.
std::vector<Detection> inference_postprocess(std::span<const Prediction> preds,
                                             std::size_t num_known, int top_k, int image_id);

struct StageOptions {
  /// Teacher for distillation (tasks after the first), or nullptr.
  const Detector* teacher = nullptr;
  std::string tag;  // log label, e.g. "pretrain"
  /// Called after every optimizer step with the targets of both views (owl only).
  std::function<void(const SceneImage&, const std::vector<Target>&,
                     const SceneImage&, const std::vector<Target>&)> audit;
};

/// Full-model training on annotated targets with the binary objectness loss,
/// plus feature and class distillation when a teacher is given.
StageReport run_pretrain_stage(std::size_t task, std::span<const SceneImage* const> images,
                               Detector& model, const RunConfig& config, TrainLog& log,
                               const StageOptions& options = {});

/// Open-world learning: stage-2 freeze, two views per image, swapped pseudo
/// targets, consistency, and distillation when a teacher is given.
StageReport run_owl_stage(std::size_t task, std::span<const SceneImage* const> images,
                          Detector& model, const RunConfig& config, ProposalCache& proposals,
                          TrainLog& log, const StageOptions& options = {});

/// Annotation-only fine-tuning used on the exemplar set.
StageReport run_finetune_stage(std::size_t task, std::span<const SceneImage* const> images,
                               Detector& model, const RunConfig& config, TrainLog& log,
                               const StageOptions& options = {});

/// Task t -> t+1: widen the class head, snapshot the teacher, train both
/// stages on the new data (with distillation when enabled), refresh the
/// exemplar store and fine-tune on it (when replay is enabled).
void run_incremental_step(std::size_t next_task, std::span<const SceneImage* const> images,
                          Detector& model, ExemplarStore& store, const TaskSchedule& schedule,
                          const RunConfig& config, ProposalCache& proposals, TrainLog& log);

std::vector<Detection> detect(const Detector& model, std::span<const SceneImage* const> images,
                              int top_k);

EvalReport evaluate_model(const Detector& model, std::span<const SceneImage* const> images,
                          const TaskSchedule& schedule, std::size_t task, const RunConfig& config,
                          std::vector<Detection>* detections_out = nullptr);

std::vector<GroundTruth> ground_truth_of(std::span<const SceneImage* const> images);

/// Binary-head separation on held-out images: AUC of objectness between
/// queries matched to a ground-truth object and the remaining queries.
double objectness_auc(const Detector& model, std::span<const SceneImage* const> images,
                      const RunConfig& config);

}  // namespace owdetr
