#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "owdetr/types.hpp"

namespace owdetr {

/// Targets x predictions matching costs, row-major.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, std::vector<double> e);
  double at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
};

/// Injective map from target rows to prediction columns.
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (target, prediction)
  double total_cost = 0;

  bool empty() const { return pairs.empty(); }
  /// Prediction index matched to target row r.
  std::size_t prediction_for(std::size_t target) const;
};

/// Weights of the pairwise matching cost. Defaults follow Deformable DETR.
struct CostWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

/// Focal-style probability-space classification cost for a logit whose
/// positive class is the target: pos(p) - neg(p).
double focal_match_cost(double logit, double alpha, double gamma);

/// Box part of the matching cost: w_l1 * |b - b^|_1 + w_giou * (1 - giou).
double box_match_cost(const BoxCXCYWH& target, const BoxCXCYWH& pred,
                      const CostWeights& weights);

/// Class-specific matcher cost. Target labels are 1-based class slots.
CostMatrix class_match_cost(std::span<const Target> targets,
                            std::span<const Prediction> preds,
                            const CostWeights& weights);

/// Binary (objectness) matcher cost; every row is a foreground target.
CostMatrix binary_match_cost(std::span<const Target> binary_targets,
                             std::span<const Prediction> preds,
                             const CostWeights& weights);

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// by shortest augmenting paths with row/column potentials. Ties resolve to
/// the lowest column index.
Assignment hungarian_solve(const CostMatrix& cost);

struct DualAssignment {
  Assignment class_assignment;   // from the class-specific cost
  Assignment binary_assignment;  // from the objectness cost
};

/// Binary targets for a target list: every object becomes foreground (0).
std::vector<Target> to_binary_targets(std::span<const Target> targets);

DualAssignment dual_match(std::span<const Target> targets,
                          std::span<const Prediction> preds,
                          const CostWeights& weights);

}  // namespace owdetr
