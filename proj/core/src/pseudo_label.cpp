#include "owdetr/pseudo_label.hpp"

#include <algorithm>
#include <stdexcept>

#include "owdetr/matching.hpp"

namespace owdetr {

namespace {

double max_iou(const BoxCXCYWH& box, std::span<const Target> others) {
  double best = 0;
  for (const auto& o : others) best = std::max(best, iou(box, o.box));
  return best;
}

std::vector<Target> transfer(std::span<const Target> pseudo, const CropTransform& t,
                             std::span<const Target> dest_known, const PseudoLabelConfig& cfg) {
  std::vector<Target> out;
  for (const auto& p : pseudo) {
    auto box = transfer_box(t, p.box, cfg.min_retention);
    if (!box) continue;
    if (max_iou(*box, dest_known) > cfg.overlap_iou) continue;
    Target moved = p;
    moved.box = *box;
    out.push_back(moved);
  }
  return out;
}

}  // namespace

void PseudoLabelConfig::validate() const {
  if (!(delta > 0 && delta < 1)) throw std::invalid_argument("pseudo labels: delta must lie in (0,1)");
  if (k < 0 || k_ss < 0) throw std::invalid_argument("pseudo labels: k and k_ss must be >= 0");
  for (double v : {nms_iou, overlap_iou, min_retention}) {
    if (!(v >= 0 && v <= 1)) throw std::invalid_argument("pseudo labels: IoU and retention in [0,1]");
  }
  if (!(ss_max_area > 0 && ss_max_area <= 1)) {
    throw std::invalid_argument("pseudo labels: ss_max_area must lie in (0,1]");
  }
}

std::vector<Target> select_binary_pseudo(std::span<const Prediction> preds,
                                         std::span<const Target> known_gt, double delta, int k,
                                         double nms_iou, double overlap_iou, int unknown_label) {
  std::vector<BoxXYXY> boxes;
  std::vector<double> scores;
  for (const auto& p : preds) {
    boxes.push_back(cxcywh_to_xyxy(p.box));
    scores.push_back(p.objectness());
  }
  std::vector<Target> out;
  for (std::size_t i : nms(boxes, scores, nms_iou)) {
    if (static_cast<int>(out.size()) >= k) break;
    if (!(scores[i] > delta)) continue;
    if (max_iou(preds[i].box, known_gt) > overlap_iou) continue;
    out.push_back({unknown_label, preds[i].box, TargetSource::pseudo_binary, -1});
  }
  return out;
}

std::vector<Target> supplement_selective_search(std::span<const BoxCXCYWH> proposals,
                                                std::span<const Target> known_gt,
                                                std::span<const Target> binary_pseudo,
                                                double overlap_iou, int k_ss, int unknown_label,
                                                double max_area, std::span<const int> keys) {
  if (!keys.empty() && keys.size() != proposals.size()) {
    throw std::invalid_argument("supplement_selective_search: keys must parallel proposals");
  }
  std::vector<Target> out;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (static_cast<int>(out.size()) >= k_ss) break;
    const BoxCXCYWH& b = proposals[i];
    if (b.w * b.h > max_area) continue;
    if (max_iou(b, known_gt) > overlap_iou || max_iou(b, binary_pseudo) > overlap_iou) continue;
    out.push_back({unknown_label, b, TargetSource::pseudo_ss, keys.empty() ? -1 : keys[i]});
  }
  return out;
}

KeyedProposals key_proposals(std::span<const BoxCXCYWH> proposals) {
  KeyedProposals out;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    out.boxes.push_back(proposals[i]);
    out.keys.push_back(kProposalKeyBase + static_cast<int>(i));
  }
  return out;
}

KeyedProposals transfer_proposals(const KeyedProposals& in, const CropTransform& t,
                                  double min_retention) {
  KeyedProposals out;
  for (std::size_t i = 0; i < in.boxes.size(); ++i) {
    if (auto b = transfer_box(t, in.boxes[i], min_retention)) {
      out.boxes.push_back(*b);
      out.keys.push_back(in.keys[i]);
    }
  }
  return out;
}

SwappedTargets build_swapped_targets(const CropTransform& t, std::span<const Prediction> preds_i,
                                     std::span<const Prediction> preds_aug,
                                     std::span<const Target> known_gt_i,
                                     std::span<const Target> known_gt_aug,
                                     const KeyedProposals& ss_i, const KeyedProposals& ss_aug,
                                     const PseudoLabelConfig& cfg, int unknown_label) {
  if (!t.invertible()) throw std::invalid_argument("build_swapped_targets: transform not invertible");
  const CropTransform inv = t.inverse();

  auto pseudo_for = [&](std::span<const Prediction> preds, std::span<const Target> known,
                        const KeyedProposals& ss) {
    std::vector<Target> p = select_binary_pseudo(preds, known, cfg.delta, cfg.k, cfg.nms_iou,
                                                 cfg.overlap_iou, unknown_label);
    std::vector<Target> s = supplement_selective_search(ss.boxes, known, p, cfg.overlap_iou,
                                                        cfg.k_ss, unknown_label, cfg.ss_max_area,
                                                        ss.keys);
    p.insert(p.end(), s.begin(), s.end());
    return p;
  };

  SwappedTargets out;
  out.pseudo_from_i = pseudo_for(preds_i, known_gt_i, ss_i);
  out.pseudo_from_aug = pseudo_for(preds_aug, known_gt_aug, ss_aug);

  out.y_u.assign(known_gt_i.begin(), known_gt_i.end());
  for (auto& p : transfer(out.pseudo_from_aug, inv, known_gt_i, cfg)) out.y_u.push_back(p);
  out.y_u_aug.assign(known_gt_aug.begin(), known_gt_aug.end());
  for (auto& p : transfer(out.pseudo_from_i, t, known_gt_aug, cfg)) out.y_u_aug.push_back(p);

  out.binary = to_binary_targets(out.y_u);
  out.binary_aug = to_binary_targets(out.y_u_aug);
  return out;
}

}  // namespace owdetr
