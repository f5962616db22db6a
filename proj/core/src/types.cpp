#include "owdetr/types.hpp"

#include <cmath>

namespace owdetr {

std::string to_string(TargetSource source) {
  switch (source) {
    case TargetSource::annotated: return "annotated";
    case TargetSource::pseudo_binary: return "pseudo_binary";
    case TargetSource::pseudo_ss: return "pseudo_ss";
  }
  return "unknown";
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double Prediction::objectness() const { return sigmoid_value(binary_logit); }

std::vector<Prediction> HeadOutputs::predictions() const {
  const std::size_t n = num_queries();
  const std::size_t slots = class_logits.cols();
  const std::size_t d = query_features.cols();
  std::vector<Prediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = out[i];
    p.class_logits.assign(class_logits.values().begin() + i * slots,
                          class_logits.values().begin() + (i + 1) * slots);
    p.binary_logit = binary_logits.at(i);
    p.box = {boxes.at(i, 0), boxes.at(i, 1), boxes.at(i, 2), boxes.at(i, 3)};
    p.query_feature.assign(query_features.values().begin() + i * d,
                           query_features.values().begin() + (i + 1) * d);
  }
  return out;
}

}  // namespace owdetr
