#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "owdetr/geometry.hpp"
#include "owdetr/schedule.hpp"

namespace owdetr {

/// Label used for the unknown class in detections and relabelled ground truth.
inline constexpr int kUnknownLabel = -1;

struct Detection {
  int image_id = 0;
  int label = 0;  // class id, or kUnknownLabel
  double score = 0;
  BoxCXCYWH box;
};

struct GroundTruth {
  int image_id = 0;
  int label = 0;
  BoxCXCYWH box;
};

inline constexpr double kMatchIou = 0.5;

/// Detection indices by descending score, then lower image id, then lower index.
std::vector<std::size_t> ranking_order(std::span<const Detection> dets);

/// Greedy VOC matching of detections against ground truth (labels ignored):
/// each detection in ranking order takes its best-overlap box in the same
/// image if IoU >= 0.5 and that box is still free. Returns a TP flag per
/// ranked position, in ranking order.
std::vector<bool> greedy_match(std::span<const Detection> ranked, std::span<const GroundTruth> gt);

/// All-point interpolated AP at IoU 0.5. Absent when the class has no ground truth.
std::optional<double> voc_ap50(std::span<const Detection> detections,
                               std::span<const GroundTruth> ground_truth, int class_id);

/// Fraction of unknown ground truth matched by unknown-labelled detections.
std::optional<double> u_recall(std::span<const Detection> detections,
                               std::span<const GroundTruth> unknown_gt);

/// Known-class detections scoring >= score_floor with IoU >= 0.5 to some unknown box.
int a_ose(std::span<const Detection> detections, std::span<const GroundTruth> unknown_gt,
          double score_floor = 0.05);

/// P_closed / P_open - 1, pooled over known classes, at the first rank where
/// known-class recall reaches recall_level. P_open counts known-class
/// detections landing on unknown objects as false positives; P_closed
/// leaves them out. Absent when the recall level is never reached.
std::optional<double> wilderness_impact(std::span<const Detection> detections,
                                        std::span<const GroundTruth> known_gt,
                                        std::span<const GroundTruth> unknown_gt,
                                        double recall_level = 0.8);

struct EvalOptions {
  double a_ose_score_floor = 0.05;
  double wi_recall_level = 0.8;
};

struct EvalReport {
  std::size_t task = 1;
  std::size_t num_images = 0;
  std::size_t num_known_gt = 0;
  std::size_t num_unknown_gt = 0;
  std::map<int, std::optional<double>> class_ap;  // every class in K^t
  std::optional<double> map_previous;
  std::optional<double> map_current;
  std::optional<double> map_both;
  std::optional<double> u_recall;
  std::optional<double> wi;
  int a_ose = 0;
};

/// Ground truth keeps true labels; classes beyond K^t are relabelled unknown here.
EvalReport evaluate_split(std::span<const Detection> detections,
                          std::span<const GroundTruth> ground_truth, std::size_t num_images,
                          const TaskSchedule& schedule, std::size_t task,
                          const EvalOptions& options = {});

/// JSON text of a report; `extra` members (config hash, seed) are merged in.
std::string report_json(const EvalReport& report, const std::map<std::string, std::string>& extra = {});
EvalReport report_from_json(const std::string& text);
/// Aligned text table with one row per report.
std::string report_table(std::span<const EvalReport> reports);
std::string report_csv(std::span<const EvalReport> reports);

}  // namespace owdetr
