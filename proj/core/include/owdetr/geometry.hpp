#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace owdetr {

/// Normalized box given by center and size, all components in [0,1].
struct BoxCXCYWH {
  double cx = 0, cy = 0, w = 0, h = 0;
  friend bool operator==(const BoxCXCYWH&, const BoxCXCYWH&) = default;
};

/// Normalized corner box with x1 <= x2 and y1 <= y2.
struct BoxXYXY {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  friend bool operator==(const BoxXYXY&, const BoxXYXY&) = default;
};

BoxXYXY cxcywh_to_xyxy(const BoxCXCYWH& b);
BoxCXCYWH xyxy_to_cxcywh(const BoxXYXY& b);

double area(const BoxXYXY& b);
double intersection_area(const BoxXYXY& a, const BoxXYXY& b);
BoxXYXY clip_unit(const BoxXYXY& b);
BoxXYXY enclosing(const BoxXYXY& a, const BoxXYXY& b);

/// Intersection over union; 0 when the union is empty.
double iou(const BoxXYXY& a, const BoxXYXY& b);
double iou(const BoxCXCYWH& a, const BoxCXCYWH& b);

/// Generalized IoU: iou - (|C| - |U|) / |C| with C the smallest enclosing box.
/// A degenerate enclosing box yields 0.
double giou(const BoxXYXY& a, const BoxXYXY& b);
double giou(const BoxCXCYWH& a, const BoxCXCYWH& b);

/// Greedy non-maximum suppression. Kept indices come back in descending score
/// order; equal scores are visited lower index first. A box is suppressed when
/// its IoU with an already kept box exceeds iou_threshold.
std::vector<std::size_t> nms(std::span<const BoxXYXY> boxes,
                             std::span<const double> scores, double iou_threshold);

/// Pairwise IoU, row-major a.size() x b.size().
std::vector<double> iou_matrix(std::span<const BoxXYXY> a, std::span<const BoxXYXY> b);

/// Crop window [x0, x0+sx] x [y0, y0+sy] of the unit square, resized back to
/// the unit square: x' = (x - x0) / sx, y' = (y - y0) / sy.
struct CropTransform {
  double x0 = 0, y0 = 0, sx = 1, sy = 1;

  static CropTransform identity() { return {}; }
  bool invertible() const;
  /// Throws std::invalid_argument when the window has zero extent.
  CropTransform inverse() const;
  BoxXYXY apply(const BoxXYXY& b) const;
  BoxCXCYWH apply(const BoxCXCYWH& b) const;
  friend bool operator==(const CropTransform&, const CropTransform&) = default;
};

/// Fraction of a box's area that remains inside the destination frame.
double retention(const CropTransform& t, const BoxXYXY& b);

/// Maps a box into the destination frame and clips it there. Returns nothing
/// when less than min_retention of its area survives.
std::optional<BoxCXCYWH> transfer_box(const CropTransform& t, const BoxCXCYWH& b,
                                      double min_retention);

}  // namespace owdetr
