#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "owdetr/geometry.hpp"
#include "owdetr/tensor.hpp"

namespace owdetr {

enum class TargetSource : std::uint8_t { annotated, pseudo_binary, pseudo_ss };

std::string to_string(TargetSource source);

/// Binary-head labels: foreground objects are 0, background is 1.
inline constexpr int kForegroundLabel = 0;
inline constexpr int kBackgroundLabel = 1;

/// A ground-truth or pseudo ground-truth object.
///
/// Class labels are 1..n for the n known classes; every pseudo target carries
/// n + 1, the unknown slot. Binary targets reuse the struct with label 0.
struct Target {
  int label = 0;
  BoxCXCYWH box;
  TargetSource source = TargetSource::annotated;
  /// Identifies the same object across two views of one image; -1 if none.
  int pair_key = -1;

  friend bool operator==(const Target&, const Target&) = default;
};

/// Per-query detector output as plain values.
struct Prediction {
  std::vector<double> class_logits;
  double binary_logit = 0;
  BoxCXCYWH box;
  std::vector<double> query_feature;

  double objectness() const;
};

/// Differentiable per-image head outputs for N queries.
struct HeadOutputs {
  Tensor class_logits;    // N x (n_known + 1)
  Tensor binary_logits;   // N x 1
  Tensor boxes;           // N x 4, (cx, cy, w, h) in (0,1)
  Tensor query_features;  // N x d

  std::size_t num_queries() const { return boxes.rows(); }
  std::size_t num_slots() const { return class_logits.cols(); }
  std::vector<Prediction> predictions() const;
};

double sigmoid_value(double x);

}  // namespace owdetr
