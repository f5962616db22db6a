#pragma once

// Multi-view self-labeling: unknown-object pseudo targets picked from the
// objectness head and from selective-search proposals in one view supervise
// the other view.

#include <span>
#include <vector>

#include "owdetr/geometry.hpp"
#include "owdetr/types.hpp"

namespace owdetr {

struct PseudoLabelConfig {
  double delta = 0.5;        // objectness threshold
  int k = 5;                 // binary pseudo targets per view
  double nms_iou = 0.5;
  double overlap_iou = 0.05;  // "not overlapping" tolerance
  int k_ss = 5;              // selective-search pseudo targets per view
  /// Proposals covering more than this fraction of the image are ignored.
  double ss_max_area = 0.5;
  double min_retention = 0.25;

  void validate() const;
};

/// NMS on objectness, then score > delta, then IoU <= overlap_iou against every
/// known box, then the top k by score. Targets carry unknown_label.
std::vector<Target> select_binary_pseudo(std::span<const Prediction> preds,
                                         std::span<const Target> known_gt, double delta, int k,
                                         double nms_iou, double overlap_iou, int unknown_label);

/// Proposals (in ranking order) with IoU <= overlap_iou against every known
/// and binary pseudo box, truncated to k_ss. Pair keys come from `keys`
/// (parallel to proposals) when given.
std::vector<Target> supplement_selective_search(std::span<const BoxCXCYWH> proposals,
                                                std::span<const Target> known_gt,
                                                std::span<const Target> binary_pseudo,
                                                double overlap_iou, int k_ss, int unknown_label,
                                                double max_area = 1.0,
                                                std::span<const int> keys = {});

/// Selective-search proposals of view I carried into the augmented view.
/// Keys identify a proposal in both frames; proposals that leave the crop are dropped.
struct KeyedProposals {
  std::vector<BoxCXCYWH> boxes;
  std::vector<int> keys;
};
inline constexpr int kProposalKeyBase = 1000;
KeyedProposals key_proposals(std::span<const BoxCXCYWH> proposals);
KeyedProposals transfer_proposals(const KeyedProposals& in, const CropTransform& t,
                                  double min_retention);

struct SwappedTargets {
  std::vector<Target> y_u;      // supervision for view I
  std::vector<Target> y_u_aug;  // supervision for the augmented view
  std::vector<Target> binary;
  std::vector<Target> binary_aug;
  /// Pseudo targets produced in each view before transfer.
  std::vector<Target> pseudo_from_i;
  std::vector<Target> pseudo_from_aug;
};

/// Pseudo targets found in one view are mapped through T (or its inverse)
/// into the other view; boxes keeping < min_retention of their area are
/// dropped, and transferred boxes overlapping the destination's annotations
/// beyond overlap_iou are dropped as well.
SwappedTargets build_swapped_targets(const CropTransform& t, std::span<const Prediction> preds_i,
                                     std::span<const Prediction> preds_aug,
                                     std::span<const Target> known_gt_i,
                                     std::span<const Target> known_gt_aug,
                                     const KeyedProposals& ss_i, const KeyedProposals& ss_aug,
                                     const PseudoLabelConfig& config, int unknown_label);

}  // namespace owdetr
