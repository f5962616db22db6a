#include "owdetr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace owdetr {

CostMatrix::CostMatrix(std::size_t r, std::size_t c, std::vector<double> e)
    : rows(r), cols(c), entries(std::move(e)) {
  if (entries.size() != rows * cols) {
    throw std::invalid_argument("CostMatrix: entry count does not match shape");
  }
}

std::size_t Assignment::prediction_for(std::size_t target) const {
  for (const auto& [t, p] : pairs) {
    if (t == target) return p;
  }
  throw std::out_of_range("Assignment: target " + std::to_string(target) + " unmatched");
}

double focal_match_cost(double logit, double alpha, double gamma) {
  const double p = sigmoid_value(logit);
  const double neg = (1.0 - alpha) * std::pow(p, gamma) *
                     -std::log(std::max(1.0 - p, kNumericalFloor));
  const double pos = alpha * std::pow(1.0 - p, gamma) *
                     -std::log(std::max(p, kNumericalFloor));
  return pos - neg;
}

double box_match_cost(const BoxCXCYWH& target, const BoxCXCYWH& pred,
                      const CostWeights& weights) {
  const double l1 = std::fabs(target.cx - pred.cx) + std::fabs(target.cy - pred.cy) +
                    std::fabs(target.w - pred.w) + std::fabs(target.h - pred.h);
  return weights.l1 * l1 + weights.giou * (1.0 - giou(target, pred));
}

CostMatrix class_match_cost(std::span<const Target> targets,
                            std::span<const Prediction> preds,
                            const CostWeights& weights) {
  CostMatrix cost(targets.size(), preds.size(),
                  std::vector<double>(targets.size() * preds.size()));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int label = targets[i].label;
    for (std::size_t j = 0; j < preds.size(); ++j) {
      const auto& logits = preds[j].class_logits;
      if (label < 1 || static_cast<std::size_t>(label) > logits.size()) {
        throw std::out_of_range("class_match_cost: label " + std::to_string(label) +
                                " outside " + std::to_string(logits.size()) + " slots");
      }
      const double cls = focal_match_cost(logits[label - 1], weights.focal_alpha,
                                          weights.focal_gamma);
      cost.entries[i * preds.size() + j] =
          weights.cls * cls + box_match_cost(targets[i].box, preds[j].box, weights);
    }
  }
  return cost;
}

CostMatrix binary_match_cost(std::span<const Target> binary_targets,
                             std::span<const Prediction> preds,
                             const CostWeights& weights) {
  CostMatrix cost(binary_targets.size(), preds.size(),
                  std::vector<double>(binary_targets.size() * preds.size()));
  for (std::size_t i = 0; i < binary_targets.size(); ++i) {
    if (binary_targets[i].label != kForegroundLabel) {
      throw std::invalid_argument("binary_match_cost: rows must be foreground targets");
    }
    for (std::size_t j = 0; j < preds.size(); ++j) {
      const double cls = focal_match_cost(preds[j].binary_logit, weights.focal_alpha,
                                          weights.focal_gamma);
      cost.entries[i * preds.size() + j] =
          weights.cls * cls + box_match_cost(binary_targets[i].box, preds[j].box, weights);
    }
  }
  return cost;
}

Assignment hungarian_solve(const CostMatrix& cost) {
  const std::size_t n = cost.rows, m = cost.cols;
  if (n > m) {
    throw std::invalid_argument("hungarian_solve: more rows (" + std::to_string(n) +
                                ") than columns (" + std::to_string(m) + ")");
  }
  for (double v : cost.entries) {
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian_solve: non-finite cost");
  }
  Assignment result;
  if (n == 0) return result;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> column_of(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) column_of[owner[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    result.pairs.emplace_back(i, column_of[i]);
    result.total_cost += cost.at(i, column_of[i]);
  }
  return result;
}

std::vector<Target> to_binary_targets(std::span<const Target> targets) {
  std::vector<Target> out(targets.begin(), targets.end());
  for (auto& t : out) t.label = kForegroundLabel;
  return out;
}

DualAssignment dual_match(std::span<const Target> targets,
                          std::span<const Prediction> preds,
                          const CostWeights& weights) {
  DualAssignment out;
  out.class_assignment = hungarian_solve(class_match_cost(targets, preds, weights));
  const auto binary = to_binary_targets(targets);
  out.binary_assignment = hungarian_solve(binary_match_cost(binary, preds, weights));
  return out;
}

}  // namespace owdetr
