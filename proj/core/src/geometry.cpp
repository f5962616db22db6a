#include "owdetr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace owdetr {

BoxXYXY cxcywh_to_xyxy(const BoxCXCYWH& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

BoxCXCYWH xyxy_to_cxcywh(const BoxXYXY& b) {
  return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.x2 - b.x1, b.y2 - b.y1};
}

double area(const BoxXYXY& b) {
  return std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
}

double intersection_area(const BoxXYXY& a, const BoxXYXY& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

BoxXYXY clip_unit(const BoxXYXY& b) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {c(b.x1), c(b.y1), c(b.x2), c(b.y2)};
}

BoxXYXY enclosing(const BoxXYXY& a, const BoxXYXY& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

double iou(const BoxXYXY& a, const BoxXYXY& b) {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double iou(const BoxCXCYWH& a, const BoxCXCYWH& b) {
  return iou(cxcywh_to_xyxy(a), cxcywh_to_xyxy(b));
}

double giou(const BoxXYXY& a, const BoxXYXY& b) {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  const double hull = area(enclosing(a, b));
  if (hull <= 0) return 0.0;
  const double overlap = uni > 0 ? inter / uni : 0.0;
  return overlap - (hull - uni) / hull;
}

double giou(const BoxCXCYWH& a, const BoxCXCYWH& b) {
  return giou(cxcywh_to_xyxy(a), cxcywh_to_xyxy(b));
}

std::vector<std::size_t> nms(std::span<const BoxXYXY> boxes,
                             std::span<const double> scores, double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: boxes and scores differ in length");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t cur = order[i];
    if (suppressed[cur]) continue;
    kept.push_back(cur);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t other = order[j];
      if (!suppressed[other] && iou(boxes[cur], boxes[other]) > iou_threshold) {
        suppressed[other] = true;
      }
    }
  }
  return kept;
}

std::vector<double> iou_matrix(std::span<const BoxXYXY> a, std::span<const BoxXYXY> b) {
  std::vector<double> out(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = iou(a[i], b[j]);
  return out;
}

}  // namespace owdetr

namespace owdetr {

bool CropTransform::invertible() const {
  return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(sx) && std::isfinite(sy) &&
         sx > 0 && sy > 0;
}

CropTransform CropTransform::inverse() const {
  if (!invertible()) throw std::invalid_argument("CropTransform: not invertible");
  return {-x0 / sx, -y0 / sy, 1.0 / sx, 1.0 / sy};
}

BoxXYXY CropTransform::apply(const BoxXYXY& b) const {
  return {(b.x1 - x0) / sx, (b.y1 - y0) / sy, (b.x2 - x0) / sx, (b.y2 - y0) / sy};
}

BoxCXCYWH CropTransform::apply(const BoxCXCYWH& b) const {
  return {(b.cx - x0) / sx, (b.cy - y0) / sy, b.w / sx, b.h / sy};
}

double retention(const CropTransform& t, const BoxXYXY& b) {
  const BoxXYXY mapped = t.apply(b);
  const double full = area(mapped);
  if (full <= 0) return 0.0;
  return area(clip_unit(mapped)) / full;
}

std::optional<BoxCXCYWH> transfer_box(const CropTransform& t, const BoxCXCYWH& b,
                                      double min_retention) {
  if (!t.invertible()) throw std::invalid_argument("transfer_box: transform not invertible");
  const BoxXYXY corners = cxcywh_to_xyxy(b);
  if (retention(t, corners) < min_retention) return std::nullopt;
  return xyxy_to_cxcywh(clip_unit(t.apply(corners)));
}

}  // namespace owdetr
