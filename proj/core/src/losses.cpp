#include "owdetr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace owdetr {

void LossWeights::validate() const {
  for (double w : {cls, l1, giou, b_cls, con, feat, cls_kd, feat_aug, cls_kd_aug}) {
    if (!std::isfinite(w) || w < 0) {
      throw std::invalid_argument("LossWeights: weights must be finite and nonnegative");
    }
  }
  if (focal_alpha < 0 || focal_alpha > 1 || focal_gamma < 0) {
    throw std::invalid_argument("LossWeights: focal alpha in [0,1] and gamma >= 0 required");
  }
}

Tensor sigmoid_focal_loss(const Tensor& logits, const Tensor& targets,
                          std::optional<double> alpha, double gamma) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("sigmoid_focal_loss: logits " + shape_string(logits.shape()) +
                     " vs targets " + shape_string(targets.shape()));
  }
  std::vector<double> negated(targets.size());
  std::vector<double> balance(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double t = targets.at(i);
    negated[i] = 1.0 - t;
    balance[i] = alpha ? (*alpha * t + (1.0 - *alpha) * (1.0 - t)) : 1.0;
  }
  const Tensor t = targets.detach();
  const Tensor not_t(targets.shape(), std::move(negated));
  const Tensor p = sigmoid(logits);
  const Tensor q = sigmoid(neg(logits));  // 1 - p without cancellation
  const Tensor ce = neg(t * log(p) + not_t * log(q));
  const Tensor miss = t * q + not_t * p;  // 1 - p_t
  Tensor loss = pow(miss, gamma) * ce;
  if (alpha) loss = Tensor(targets.shape(), std::move(balance)) * loss;
  return sum(loss);
}

Tensor generalized_iou(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.ndim() != 2 || a.cols() != 4) {
    throw ShapeError("generalized_iou: expected matching M x 4 box tensors");
  }
  struct Corners {
    Tensor x1, y1, x2, y2, area;
  };
  auto corners = [](const Tensor& boxes) {
    static const std::size_t c0[] = {0}, c1[] = {1}, c2[] = {2}, c3[] = {3};
    const Tensor cx = take_cols(boxes, c0), cy = take_cols(boxes, c1);
    const Tensor w = take_cols(boxes, c2), h = take_cols(boxes, c3);
    const Tensor hw = scale(w, 0.5), hh = scale(h, 0.5);
    return Corners{cx - hw, cy - hh, cx + hw, cy + hh, w * h};
  };
  const Corners A = corners(a), B = corners(b);
  const Tensor iw = relu(minimum(A.x2, B.x2) - maximum(A.x1, B.x1));
  const Tensor ih = relu(minimum(A.y2, B.y2) - maximum(A.y1, B.y1));
  const Tensor inter = iw * ih;
  const Tensor uni = A.area + B.area - inter;
  const Tensor hull = (maximum(A.x2, B.x2) - minimum(A.x1, B.x1)) *
                      (maximum(A.y2, B.y2) - minimum(A.y1, B.y1));
  return inter / uni - (hull - uni) / hull;
}

Tensor box_loss(const Tensor& target_boxes, const Tensor& pred_boxes, double w_l1,
                double w_giou) {
  if (target_boxes.shape() != pred_boxes.shape()) {
    throw ShapeError("box_loss: box tensors differ in shape");
  }
  if (pred_boxes.size() == 0) return Tensor::scalar(0.0);
  const Tensor l1 = sum(abs(pred_boxes - target_boxes));
  const Tensor g = sum(1.0 - generalized_iou(target_boxes, pred_boxes));
  return scale(l1, w_l1) + scale(g, w_giou);
}

Tensor boxes_tensor(std::span<const Target> targets) {
  std::vector<double> v;
  v.reserve(targets.size() * 4);
  for (const auto& t : targets) {
    v.insert(v.end(), {t.box.cx, t.box.cy, t.box.w, t.box.h});
  }
  return Tensor(Shape{targets.size(), 4}, std::move(v));
}

LossBreakdown hungarian_loss_bin(std::span<const Target> targets,
                                 std::span<const Target> binary_targets,
                                 const HeadOutputs& outputs, const Assignment& sigma,
                                 const Assignment& sigma_star, const LossWeights& weights) {
  const std::size_t n = outputs.num_queries();
  const std::size_t slots = outputs.num_slots();
  const double norm = static_cast<double>(std::max<std::size_t>(1, targets.size()));

  std::vector<double> class_onehot(n * slots, 0.0);
  std::vector<std::size_t> matched_preds;
  std::vector<Target> matched_targets;
  for (const auto& [ti, pj] : sigma.pairs) {
    if (ti >= targets.size() || pj >= n) {
      throw std::out_of_range("hungarian_loss_bin: class assignment index out of range");
    }
    const int label = targets[ti].label;
    if (label < 1 || static_cast<std::size_t>(label) > slots) {
      throw std::out_of_range("hungarian_loss_bin: label " + std::to_string(label) +
                              " outside the class head");
    }
    class_onehot[pj * slots + static_cast<std::size_t>(label - 1)] = 1.0;
    matched_preds.push_back(pj);
    matched_targets.push_back(targets[ti]);
  }
  std::vector<double> binary_onehot(n, 0.0);
  for (const auto& [ti, pj] : sigma_star.pairs) {
    if (ti >= binary_targets.size() || pj >= n) {
      throw std::out_of_range("hungarian_loss_bin: binary assignment index out of range");
    }
    if (binary_targets[ti].label == kForegroundLabel) binary_onehot[pj] = 1.0;
  }

  const Tensor l_cls = scale(
      sigmoid_focal_loss(outputs.class_logits, Tensor(Shape{n, slots}, std::move(class_onehot)),
                         weights.focal_alpha, weights.focal_gamma),
      1.0 / norm);
  Tensor l_box = Tensor::scalar(0.0);
  if (!matched_preds.empty()) {
    l_box = scale(box_loss(boxes_tensor(matched_targets),
                           take_rows(outputs.boxes, matched_preds), weights.l1, weights.giou),
                  1.0 / norm);
  }
  const Tensor l_bcls = scale(
      sigmoid_focal_loss(outputs.binary_logits, Tensor(Shape{n, 1}, std::move(binary_onehot)),
                         weights.focal_alpha, weights.focal_gamma),
      1.0 / norm);

  LossBreakdown out;
  out.total = scale(l_cls, weights.cls) + l_box + scale(l_bcls, weights.cls * weights.b_cls);
  out.components["cls"] = l_cls.item();
  out.components["box"] = l_box.item();
  out.components["b_cls"] = l_bcls.item();
  out.components["hungarian"] = out.total.item();
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> consistency_pairs(
    std::span<const Target> targets, std::span<const Target> targets_aug,
    const Assignment& sigma, const Assignment& sigma_aug) {
  auto eligible = [](const Target& t) {
    return t.pair_key >= 0 &&
           (t.source == TargetSource::annotated || t.source == TargetSource::pseudo_ss);
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!eligible(targets[i])) continue;
    for (std::size_t j = 0; j < targets_aug.size(); ++j) {
      const Target& other = targets_aug[j];
      if (!eligible(other) || other.source != targets[i].source ||
          other.pair_key != targets[i].pair_key) {
        continue;
      }
      out.emplace_back(sigma.prediction_for(i), sigma_aug.prediction_for(j));
      break;
    }
  }
  return out;
}

Tensor consistency_loss(const Tensor& query_features, const Tensor& query_features_aug,
                        std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (query_features.cols() != query_features_aug.cols()) {
    throw ShapeError("consistency_loss: query feature widths differ");
  }
  if (pairs.empty()) return Tensor::scalar(0.0);
  std::vector<std::size_t> rows, rows_aug;
  for (const auto& [a, b] : pairs) {
    rows.push_back(a);
    rows_aug.push_back(b);
  }
  return sum(abs(take_rows(query_features, rows) - take_rows(query_features_aug, rows_aug)));
}

Tensor feat_distill_masked(const Tensor& f_cur, const Tensor& f_pre,
                           std::span<const double> mask) {
  if (f_cur.shape() != f_pre.shape() || f_cur.ndim() != 2) {
    throw ShapeError("feat_distill_masked: feature grids differ in shape");
  }
  const std::size_t cells = f_cur.rows(), channels = f_cur.cols();
  if (mask.size() != cells) {
    throw ShapeError("feat_distill_masked: mask has " + std::to_string(mask.size()) +
                     " cells, features have " + std::to_string(cells));
  }
  double unmasked = 0.0;
  std::vector<double> keep(cells * channels);
  for (std::size_t i = 0; i < cells; ++i) {
    unmasked += 1.0 - mask[i];
    for (std::size_t k = 0; k < channels; ++k) keep[i * channels + k] = 1.0 - mask[i];
  }
  if (unmasked <= 0.0) return Tensor::scalar(0.0);
  const Tensor diff = f_cur - f_pre;
  return scale(sum(Tensor(f_cur.shape(), std::move(keep)) * square(diff)),
               1.0 / (2.0 * unmasked));
}

Tensor kl_class_distill(const Tensor& p_cur, const Tensor& p_pre) {
  if (p_cur.shape() != p_pre.shape()) {
    throw ShapeError("kl_class_distill: probability tables differ in shape");
  }
  if (p_cur.size() == 0) return Tensor::scalar(0.0);
  const std::size_t m = p_cur.rows(), k = p_cur.cols();
  for (const Tensor* p : {&p_cur, &p_pre}) {
    for (std::size_t i = 0; i < m; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) total += p->at(i * k + j);
      if (std::fabs(total - 1.0) > 1e-6) {
        throw std::invalid_argument("kl_class_distill: row " + std::to_string(i) +
                                    " does not sum to 1");
      }
    }
  }
  const Tensor ref = p_pre.detach();
  std::vector<double> log_ref(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    log_ref[i] = std::log(std::max(ref.at(i), kNumericalFloor));
  }
  const Tensor kl = ref * (Tensor(ref.shape(), std::move(log_ref)) - log(p_cur));
  return scale(sum(kl), 1.0 / static_cast<double>(m));
}

namespace {

LossBreakdown view_loss(const ViewLoss& view, const LossWeights& weights) {
  if (!view.outputs) throw std::invalid_argument("ViewLoss: missing outputs");
  const auto binary = to_binary_targets(view.targets);
  return hungarian_loss_bin(view.targets, binary, *view.outputs,
                            view.assignment.class_assignment,
                            view.assignment.binary_assignment, weights);
}

void add_distill(LossBreakdown& acc, const DistillTerms& d, double w_feat, double w_cls,
                 const std::string& suffix) {
  const Tensor feat = feat_distill_masked(d.f_cur, d.f_pre, d.mask);
  const Tensor cls = kl_class_distill(d.p_cur, d.p_pre);
  acc.total = acc.total + scale(feat, w_feat) + scale(cls, w_cls);
  acc.components["feat_kd" + suffix] = feat.item();
  acc.components["cls_kd" + suffix] = cls.item();
}

}  // namespace

LossBreakdown total_pretrain_loss(const ViewLoss& view, const DistillTerms* distill,
                                  const LossWeights& weights) {
  weights.validate();
  LossBreakdown out = view_loss(view, weights);
  if (distill) add_distill(out, *distill, weights.feat, weights.cls_kd, "");
  out.components["total"] = out.total.item();
  return out;
}

LossBreakdown total_owl_loss(const ViewLoss& view, const ViewLoss& view_aug,
                             std::span<const std::pair<std::size_t, std::size_t>> con_pairs,
                             const LossWeights& weights) {
  weights.validate();
  const LossBreakdown a = view_loss(view, weights);
  const LossBreakdown b = view_loss(view_aug, weights);
  const Tensor con = consistency_loss(view.outputs->query_features,
                                      view_aug.outputs->query_features, con_pairs);
  LossBreakdown out;
  out.total = a.total + b.total + scale(con, weights.con);
  for (const auto& [k, v] : a.components) out.components[k] = v;
  for (const auto& [k, v] : b.components) out.components[k + "_aug"] = v;
  out.components["con"] = con.item();
  out.components["total"] = out.total.item();
  return out;
}

LossBreakdown total_owl_loss_with_kd(
    const ViewLoss& view, const ViewLoss& view_aug,
    std::span<const std::pair<std::size_t, std::size_t>> con_pairs,
    const DistillTerms& distill, const DistillTerms& distill_aug,
    const LossWeights& weights) {
  LossBreakdown out = total_owl_loss(view, view_aug, con_pairs, weights);
  add_distill(out, distill, weights.feat, weights.cls_kd, "");
  add_distill(out, distill_aug, weights.feat_aug, weights.cls_kd_aug, "_aug");
  out.components["total"] = out.total.item();
  return out;
}

}  // namespace owdetr
