#include "owdetr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace owdetr {

using nlohmann::json;

std::vector<std::size_t> ranking_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    if (dets[a].image_id != dets[b].image_id) return dets[a].image_id < dets[b].image_id;
    return a < b;
  });
  return order;
}

std::vector<bool> greedy_match(std::span<const Detection> ranked, std::span<const GroundTruth> gt) {
  std::vector<bool> taken(gt.size(), false);
  std::vector<bool> tp(ranked.size(), false);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    double best = -1;
    std::size_t best_j = gt.size();
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (gt[j].image_id != ranked[i].image_id) continue;
      const double o = iou(ranked[i].box, gt[j].box);
      if (o > best) {
        best = o;
        best_j = j;
      }
    }
    if (best_j < gt.size() && best >= kMatchIou && !taken[best_j]) {
      taken[best_j] = true;
      tp[i] = true;
    }
  }
  return tp;
}

namespace {

std::vector<Detection> ranked_with_label(std::span<const Detection> dets, int label) {
  std::vector<Detection> sel;
  for (const auto& d : dets)
    if (d.label == label) sel.push_back(d);
  std::vector<Detection> out;
  for (std::size_t i : ranking_order(sel)) out.push_back(sel[i]);
  return out;
}

std::vector<GroundTruth> with_label(std::span<const GroundTruth> gt, int label) {
  std::vector<GroundTruth> out;
  for (const auto& g : gt)
    if (g.label == label) out.push_back(g);
  return out;
}

std::optional<double> mean_of(const std::map<int, std::optional<double>>& ap,
                              const std::vector<int>& classes) {
  double s = 0;
  int n = 0;
  for (int c : classes) {
    auto it = ap.find(c);
    if (it != ap.end() && it->second) {
      s += *it->second;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string cell(const std::optional<double>& v, double scale, int precision) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v * scale);
  return buf;
}

}  // namespace

std::optional<double> voc_ap50(std::span<const Detection> detections,
                               std::span<const GroundTruth> ground_truth, int class_id) {
  const auto gt = with_label(ground_truth, class_id);
  if (gt.empty()) return std::nullopt;
  const auto ranked = ranked_with_label(detections, class_id);
  const auto tp = greedy_match(ranked, gt);

  std::vector<double> recall, precision;
  double ntp = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i]) ++ntp;
    recall.push_back(ntp / gt.size());
    precision.push_back(ntp / static_cast<double>(i + 1));
  }
  // Precision envelope, then area under the step curve.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

std::optional<double> u_recall(std::span<const Detection> detections,
                               std::span<const GroundTruth> unknown_gt) {
  if (unknown_gt.empty()) return std::nullopt;
  const auto ranked = ranked_with_label(detections, kUnknownLabel);
  const auto tp = greedy_match(ranked, unknown_gt);
  const auto hits = std::count(tp.begin(), tp.end(), true);
  return static_cast<double>(hits) / static_cast<double>(unknown_gt.size());
}

int a_ose(std::span<const Detection> detections, std::span<const GroundTruth> unknown_gt,
          double score_floor) {
  int count = 0;
  for (const auto& d : detections) {
    if (d.label == kUnknownLabel || d.score < score_floor) continue;
    for (const auto& g : unknown_gt) {
      if (g.image_id == d.image_id && iou(d.box, g.box) >= kMatchIou) {
        ++count;
        break;
      }
    }
  }
  return count;
}

std::optional<double> wilderness_impact(std::span<const Detection> detections,
                                        std::span<const GroundTruth> known_gt,
                                        std::span<const GroundTruth> unknown_gt,
                                        double recall_level) {
  if (!(recall_level > 0 && recall_level <= 1)) {
    throw std::invalid_argument("wilderness_impact: recall_level must lie in (0,1]");
  }
  if (known_gt.empty()) return std::nullopt;

  std::vector<Detection> known;
  for (const auto& d : detections)
    if (d.label != kUnknownLabel) known.push_back(d);
  const auto order = ranking_order(known);

  // Per-class VOC matching decides which detections are true positives.
  std::vector<bool> is_tp(known.size(), false);
  std::vector<int> labels;
  for (const auto& d : known) labels.push_back(d.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  for (int label : labels) {
    std::vector<std::size_t> idx;
    for (std::size_t i : order)
      if (known[i].label == label) idx.push_back(i);
    std::vector<Detection> ranked;
    for (std::size_t i : idx) ranked.push_back(known[i]);
    const auto tp = greedy_match(ranked, with_label(known_gt, label));
    for (std::size_t k = 0; k < idx.size(); ++k) is_tp[idx[k]] = tp[k];
  }

  double tp = 0, on_unknown = 0, total = 0;
  for (std::size_t i : order) {
    ++total;
    if (is_tp[i]) {
      ++tp;
    } else {
      for (const auto& g : unknown_gt) {
        if (g.image_id == known[i].image_id && iou(known[i].box, g.box) >= kMatchIou) {
          ++on_unknown;
          break;
        }
      }
    }
    if (tp / static_cast<double>(known_gt.size()) >= recall_level) {
      const double p_open = tp / total;
      const double p_closed = tp / (total - on_unknown);
      return p_closed / p_open - 1.0;
    }
  }
  return std::nullopt;
}

EvalReport evaluate_split(std::span<const Detection> detections,
                          std::span<const GroundTruth> ground_truth, std::size_t num_images,
                          const TaskSchedule& schedule, std::size_t task,
                          const EvalOptions& options) {
  if (num_images == 0 || ground_truth.empty()) {
    throw std::invalid_argument("evaluate_split: empty split");
  }
  for (const auto& d : detections) {
    if (!std::isfinite(d.score) || d.score < 0 || d.score > 1) {
      throw std::invalid_argument("evaluate_split: detection score outside [0,1]");
    }
  }
  EvalReport r;
  r.task = task;
  r.num_images = num_images;
  std::vector<GroundTruth> known, unknown;
  for (const auto& g : ground_truth) {
    if (schedule.is_known(g.label, task)) {
      known.push_back(g);
    } else {
      GroundTruth u = g;
      u.label = kUnknownLabel;
      unknown.push_back(u);
    }
  }
  r.num_known_gt = known.size();
  r.num_unknown_gt = unknown.size();
  for (int c : schedule.known(task)) r.class_ap[c] = voc_ap50(detections, known, c);
  r.map_previous = mean_of(r.class_ap, schedule.previously_known(task));
  r.map_current = mean_of(r.class_ap, schedule.group(task));
  r.map_both = mean_of(r.class_ap, schedule.known(task));
  r.u_recall = u_recall(detections, unknown);
  r.wi = wilderness_impact(detections, known, unknown, options.wi_recall_level);
  r.a_ose = a_ose(detections, unknown, options.a_ose_score_floor);
  return r;
}

std::string report_json(const EvalReport& r, const std::map<std::string, std::string>& extra) {
  json j;
  j["note"] = "WI = P_closed / P_open - 1 at the known-recall level; A-OSE = known-labelled detections matching unknown objects";
  j["task"] = r.task;
  j["num_images"] = r.num_images;
  j["num_known_gt"] = r.num_known_gt;
  j["num_unknown_gt"] = r.num_unknown_gt;
  json ap = json::object();
  for (const auto& [c, v] : r.class_ap) ap[std::to_string(c)] = opt(v);
  j["class_ap50"] = ap;
  j["map_previous"] = opt(r.map_previous);
  j["map_current"] = opt(r.map_current);
  j["map_both"] = opt(r.map_both);
  j["u_recall"] = opt(r.u_recall);
  j["wi"] = opt(r.wi);
  j["a_ose"] = r.a_ose;
  for (const auto& [k, v] : extra) j[k] = v;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.task = j.at("task").get<std::size_t>();
  r.num_images = j.at("num_images").get<std::size_t>();
  r.num_known_gt = j.at("num_known_gt").get<std::size_t>();
  r.num_unknown_gt = j.at("num_unknown_gt").get<std::size_t>();
  for (const auto& [k, v] : j.at("class_ap50").items()) r.class_ap[std::stoi(k)] = opt_from(v);
  r.map_previous = opt_from(j.at("map_previous"));
  r.map_current = opt_from(j.at("map_current"));
  r.map_both = opt_from(j.at("map_both"));
  r.u_recall = opt_from(j.at("u_recall"));
  r.wi = opt_from(j.at("wi"));
  r.a_ose = j.at("a_ose").get<int>();
  return r;
}

std::string report_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %9s %8s %7s %10s %10s %10s\n", "Task", "U-Recall",
                "WI", "A-OSE", "Prev mAP", "Cur mAP", "Both mAP");
  os << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-6zu %9s %8s %7d %10s %10s %10s\n", r.task,
                  cell(r.u_recall, 100, 1).c_str(), cell(r.wi, 1, 4).c_str(), r.a_ose,
                  cell(r.map_previous, 100, 1).c_str(), cell(r.map_current, 100, 1).c_str(),
                  cell(r.map_both, 100, 1).c_str());
    os << line;
  }
  return os.str();
}

std::string report_csv(std::span<const EvalReport> reports) {
  std::ostringstream os;
  os << "task,u_recall,wi,a_ose,map_previous,map_current,map_both\n";
  auto field = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return std::string(buf);
  };
  for (const auto& r : reports) {
    os << r.task << ',' << field(r.u_recall) << ',' << field(r.wi) << ',' << r.a_ose << ','
       << field(r.map_previous) << ',' << field(r.map_current) << ',' << field(r.map_both) << '\n';
  }
  return os.str();
}

}  // namespace owdetr
