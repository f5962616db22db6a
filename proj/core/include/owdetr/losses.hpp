#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "owdetr/matching.hpp"
#include "owdetr/tensor.hpp"
#include "owdetr/types.hpp"

namespace owdetr {

struct LossWeights {
  /// Coefficient on both focal classification terms (Deformable DETR uses 2).
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double b_cls = 1.0;
  double con = 1.0;
  double feat = 1.0;
  double cls_kd = 1.0;
  double feat_aug = 1.0;
  double cls_kd_aug = 1.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  /// Throws std::invalid_argument on negative or non-finite weights.
  void validate() const;
};

/// Sum over entries of -alpha_t (1 - p_t)^gamma log p_t. `targets` holds 0/1
/// per entry. Without alpha the class balance term is dropped.
Tensor sigmoid_focal_loss(const Tensor& logits, const Tensor& targets,
                          std::optional<double> alpha, double gamma);

/// Row-wise generalized IoU of two M x 4 (cx, cy, w, h) tensors, as M x 1.
Tensor generalized_iou(const Tensor& a, const Tensor& b);

/// Sum over rows of w_l1 * |b - b^|_1 + w_giou * (1 - giou(b, b^)).
Tensor box_loss(const Tensor& target_boxes, const Tensor& pred_boxes, double w_l1,
                double w_giou);

/// Stacks target boxes as an M x 4 constant tensor.
Tensor boxes_tensor(std::span<const Target> targets);

struct LossBreakdown {
  Tensor total;
  std::map<std::string, double> components;
};

/// Hungarian loss with the binary objectness term, normalized by the number
/// of targets. Unmatched queries are trained towards no-object on both heads.
LossBreakdown hungarian_loss_bin(std::span<const Target> targets,
                                 std::span<const Target> binary_targets,
                                 const HeadOutputs& outputs, const Assignment& sigma,
                                 const Assignment& sigma_star, const LossWeights& weights);

/// Matched query pairs (index in view I, index in the augmented view) eligible
/// for the consistency constraint: annotated and selective-search targets that
/// appear in both views under the same pair key.
std::vector<std::pair<std::size_t, std::size_t>> consistency_pairs(
    std::span<const Target> targets, std::span<const Target> targets_aug,
    const Assignment& sigma, const Assignment& sigma_aug);

/// Sum over pairs of the L1 distance between query features.
Tensor consistency_loss(const Tensor& query_features, const Tensor& query_features_aug,
                        std::span<const std::pair<std::size_t, std::size_t>> pairs);

/// (1 / 2N) sum (1 - mask) (f_cur - f_pre)^2 over a (w*h) x c feature grid,
/// with N the number of unmasked cells. Zero when every cell is masked.
Tensor feat_distill_masked(const Tensor& f_cur, const Tensor& f_pre,
                           std::span<const double> mask);

/// Mean over rows of KL(p_pre || p_cur). Both inputs hold probability rows.
Tensor kl_class_distill(const Tensor& p_cur, const Tensor& p_pre);

/// Everything needed to evaluate one view's Hungarian loss.
struct ViewLoss {
  std::span<const Target> targets;
  const HeadOutputs* outputs = nullptr;
  DualAssignment assignment;
};

/// Distillation inputs for one view: projected features of the student and
/// teacher, the known-class mask, and matched class probability rows.
struct DistillTerms {
  Tensor f_cur;
  Tensor f_pre;
  std::vector<double> mask;
  Tensor p_cur;  // M x K, may have zero rows
  Tensor p_pre;
};

LossBreakdown total_pretrain_loss(const ViewLoss& view, const DistillTerms* distill,
                                  const LossWeights& weights);

LossBreakdown total_owl_loss(const ViewLoss& view, const ViewLoss& view_aug,
                             std::span<const std::pair<std::size_t, std::size_t>> con_pairs,
                             const LossWeights& weights);

LossBreakdown total_owl_loss_with_kd(
    const ViewLoss& view, const ViewLoss& view_aug,
    std::span<const std::pair<std::size_t, std::size_t>> con_pairs,
    const DistillTerms& distill, const DistillTerms& distill_aug,
    const LossWeights& weights);

}  // namespace owdetr
