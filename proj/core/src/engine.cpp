#include "owdetr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "owdetr/losses.hpp"
#include "owdetr/matching.hpp"
#include "owdetr/pseudo_label.hpp"

namespace owdetr {

using nlohmann::json;

std::string TrainLog::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

void TrainLog::append(const TrainLog& other) {
  lines_.insert(lines_.end(), other.lines_.begin(), other.lines_.end());
}

const std::vector<BoxCXCYWH>& ProposalCache::get(const SceneImage& image) {
  auto it = cache_.find(image.id);
  if (it == cache_.end()) {
    SelectiveSearchConfig cfg = config_;
    cfg.seed = derive_seed(config_.seed, static_cast<std::uint64_t>(image.id));
    it = cache_.emplace(image.id, selective_search(image.raster, cfg)).first;
  }
  return it->second;
}

namespace {

std::uint64_t stream_id(const std::string& tag, std::size_t task, std::uint64_t extra) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h ^ (static_cast<std::uint64_t>(task) << 48) ^ extra;
}

std::vector<double> known_mask(const Detector& model, std::span<const Target> known) {
  const std::size_t g = model.config().grid();
  std::vector<double> mask(g * g, 0.0);
  for (std::size_t y = 0; y < g; ++y)
    for (std::size_t x = 0; x < g; ++x) {
      const double cx = (x + 0.5) / g, cy = (y + 0.5) / g;
      for (const auto& t : known) {
        const BoxXYXY b = cxcywh_to_xyxy(t.box);
        if (cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2) {
          mask[y * g + x] = 1.0;
          break;
        }
      }
    }
  return mask;
}

std::vector<double> softmax_row(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= s;
  return p;
}

// Distillation inputs for one view of one image.
DistillTerms make_distill(const Detector& teacher, const Raster& raster,
                          std::span<const Target> annotations, const DetectorOutput& student,
                          std::span<const Prediction> student_preds, const RunConfig& cfg) {
  const DetectorOutput t_out = teacher.forward(raster);
  const auto t_preds = t_out.heads.predictions();
  const std::size_t n_prev = teacher.num_known();
  const std::size_t t_slots = teacher.num_slots();

  DistillTerms d;
  d.f_cur = student.features;
  d.f_pre = t_out.features;
  d.mask = known_mask(teacher, annotations);

  const auto pseudo = select_teacher_pseudo_gt(t_preds, annotations, cfg.teacher_threshold, n_prev);
  if (pseudo.empty()) {
    d.p_cur = Tensor::matrix(0, t_slots, {});
    d.p_pre = Tensor::matrix(0, t_slots, {});
    return d;
  }
  const Assignment a = hungarian_solve(class_match_cost(pseudo, student_preds, cfg.cost));
  std::vector<std::size_t> rows;
  std::vector<double> pre;
  for (const auto& [target, pred] : a.pairs) {
    rows.push_back(pred);
    const auto& logits = t_preds[static_cast<std::size_t>(pseudo[target].pair_key)].class_logits;
    const auto p = softmax_row(logits);
    pre.insert(pre.end(), p.begin(), p.end());
  }
  // Student slots that the teacher knows: its previous classes and the unknown slot.
  std::vector<std::size_t> cols(n_prev);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  cols.push_back(student.heads.num_slots() - 1);
  d.p_cur = softmax(take_cols(take_rows(student.heads.class_logits, rows), cols));
  d.p_pre = Tensor::matrix(rows.size(), t_slots, std::move(pre));
  return d;
}

struct Loop {
  std::size_t task;
  std::string tag;
  int epochs;
  int decay_epoch;
};

template <typename Step>
StageReport train_loop(const Loop& loop, std::span<const SceneImage* const> images,
                       Detector& model, const RunConfig& cfg, TrainLog& log, Step&& step) {
  if (images.empty()) throw std::invalid_argument(loop.tag + ": empty dataset");
  StageReport report;
  Optimizer opt(Optimizer::parse(cfg.optimizer), cfg.weight_decay, cfg.clip_norm);
  std::vector<std::size_t> order(images.size());
  const double inv_batch = 1.0 / cfg.batch_size;
  for (int epoch = 0; epoch < loop.epochs; ++epoch) {
    const double lr = cfg.lr * (epoch >= loop.decay_epoch ? cfg.lr_decay : 1.0);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, stream_id(loop.tag, loop.task, static_cast<std::uint64_t>(epoch))));
    std::shuffle(order.begin(), order.end(), rng);

    std::map<std::string, double> sums;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = start; i < end; ++i) {
        TapeScope scope;
        const LossBreakdown lb = step(*images[order[i]], epoch, report);
        backward(scale(lb.total, inv_batch));
        for (const auto& [k, v] : lb.components) sums[k] += v;
      }
      opt.step(model, lr);
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.lr = lr;
    json j;
    j["stage"] = loop.tag;
    j["task"] = loop.task;
    j["epoch"] = epoch + 1;
    j["lr"] = lr;
    for (const auto& [k, v] : sums) {
      stats.mean[k] = v / static_cast<double>(images.size());
      j["loss"][k] = stats.mean[k];
    }
    log.record(j.dump());
    report.epochs.push_back(std::move(stats));
  }
  return report;
}

double max_iou_with(const BoxCXCYWH& b, std::span<const Target> others) {
  double best = 0;
  for (const auto& o : others) best = std::max(best, iou(b, o.box));
  return best;
}

}  // namespace

// ---- selection helpers ---------------------------------------------------------

ExemplarStore exemplar_select_balanced(std::span<const SceneImage* const> pool,
                                       const std::vector<int>& classes, int cap,
                                       std::uint64_t seed) {
  if (cap < 1) throw std::invalid_argument("exemplar_select_balanced: cap must be >= 1");
  ExemplarStore store;
  store.cap = cap;
  for (int c : classes) store.instances[c] = 0;
  auto count_in = [](const SceneImage& img) {
    std::map<int, int> n;
    for (const auto& a : img.annotations) ++n[a.label];
    return n;
  };
  std::vector<bool> chosen(pool.size(), false);
  std::vector<int> sorted = classes;
  std::sort(sorted.begin(), sorted.end());
  for (int c : sorted) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      for (const auto& a : pool[i]->annotations)
        if (a.label == c) {
          candidates.push_back(i);
          break;
        }
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (std::size_t i : candidates) {
      if (store.instances[c] >= cap) break;
      if (chosen[i]) continue;
      const auto n = count_in(*pool[i]);
      bool fits = true;
      for (const auto& [cls, k] : n) {
        auto it = store.instances.find(cls);
        if (it != store.instances.end() && it->second + k > cap) fits = false;
      }
      if (!fits) continue;
      chosen[i] = true;
      for (const auto& [cls, k] : n) {
        auto it = store.instances.find(cls);
        if (it != store.instances.end()) it->second += k;
      }
    }
  }
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (chosen[i]) store.images.push_back(*pool[i]);
  std::sort(store.images.begin(), store.images.end(),
            [](const SceneImage& a, const SceneImage& b) { return a.id < b.id; });
  return store;
}

Detector make_detector(const RunConfig& cfg, std::size_t num_known) {
  DetectorConfig d = cfg.detector;
  d.num_known = num_known;
  d.image_size = static_cast<std::size_t>(cfg.data.image_size);
  return Detector(d, derive_seed(cfg.seed, 0xDE7EC7));
}

std::vector<Target> select_teacher_pseudo_gt(std::span<const Prediction> teacher_preds,
                                             std::span<const Target> known_gt, double threshold,
                                             std::size_t num_previous) {
  std::vector<Target> out;
  for (std::size_t q = 0; q < teacher_preds.size(); ++q) {
    const auto& p = teacher_preds[q];
    if (p.class_logits.size() < num_previous) {
      throw std::invalid_argument("select_teacher_pseudo_gt: fewer class slots than previous classes");
    }
    std::size_t best = 0;
    double best_prob = -1;
    for (std::size_t c = 0; c < num_previous; ++c) {
      const double prob = sigmoid_value(p.class_logits[c]);
      if (prob > best_prob) {
        best_prob = prob;
        best = c;
      }
    }
    if (!(best_prob > threshold)) continue;
    if (max_iou_with(p.box, known_gt) > 0) continue;
    out.push_back({static_cast<int>(best) + 1, p.box, TargetSource::annotated, static_cast<int>(q)});
  }
  return out;
}

std::vector<Detection> inference_postprocess(std::span<const Prediction> preds,
                                             std::size_t num_known, int top_k, int image_id) {
  std::vector<Detection> all;
  for (const auto& p : preds) {
    if (p.class_logits.size() != num_known + 1) {
      throw std::invalid_argument("inference_postprocess: expected " + std::to_string(num_known + 1) +
                                  " class slots");
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(p.class_logits.begin(), p.class_logits.end()) - p.class_logits.begin());
    Detection d;
    d.image_id = image_id;
    d.label = best == num_known ? kUnknownLabel : static_cast<int>(best) + 1;
    d.score = sigmoid_value(p.class_logits[best]);
    d.box = p.box;
    all.push_back(d);
  }
  const auto order = ranking_order(all);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < order.size() && static_cast<int>(out.size()) < top_k; ++i) {
    out.push_back(all[order[i]]);
  }
  return out;
}

// ---- stages ----------------------------------------------------------------------

StageReport run_pretrain_stage(std::size_t task, std::span<const SceneImage* const> images,
                               Detector& model, const RunConfig& cfg, TrainLog& log,
                               const StageOptions& options) {
  model.apply_freeze(FreezePolicy::none());
  const Loop loop{task, options.tag.empty() ? "pretrain" : options.tag, cfg.pretrain_epochs,
                  cfg.pretrain_decay_epoch};
  return train_loop(loop, images, model, cfg, log,
                    [&](const SceneImage& img, int, StageReport&) {
                      const DetectorOutput out = model.forward(img.raster);
                      const auto preds = out.heads.predictions();
                      ViewLoss view{img.annotations, &out.heads,
                                    dual_match(img.annotations, preds, cfg.cost)};
                      if (!options.teacher) return total_pretrain_loss(view, nullptr, cfg.loss);
                      const DistillTerms d = make_distill(*options.teacher, img.raster,
                                                          img.annotations, out, preds, cfg);
                      return total_pretrain_loss(view, &d, cfg.loss);
                    });
}

StageReport run_finetune_stage(std::size_t task, std::span<const SceneImage* const> images,
                               Detector& model, const RunConfig& cfg, TrainLog& log,
                               const StageOptions& options) {
  model.apply_freeze(cfg.finetune_freeze == "none" ? FreezePolicy::none() : FreezePolicy::stage2());
  const Loop loop{task, options.tag.empty() ? "finetune" : options.tag, cfg.finetune_epochs,
                  cfg.finetune_decay_epoch};
  return train_loop(loop, images, model, cfg, log,
                    [&](const SceneImage& img, int, StageReport&) {
                      const DetectorOutput out = model.forward(img.raster);
                      const auto preds = out.heads.predictions();
                      ViewLoss view{img.annotations, &out.heads,
                                    dual_match(img.annotations, preds, cfg.cost)};
                      return total_pretrain_loss(view, nullptr, cfg.loss);
                    });
}

StageReport run_owl_stage(std::size_t task, std::span<const SceneImage* const> images,
                          Detector& model, const RunConfig& cfg, ProposalCache& proposals,
                          TrainLog& log, const StageOptions& options) {
  model.apply_freeze(FreezePolicy::stage2());
  const Loop loop{task, options.tag.empty() ? "owl" : options.tag, cfg.owl_epochs,
                  cfg.owl_decay_epoch};
  const int unknown_label = static_cast<int>(model.num_known()) + 1;
  StageReport report = train_loop(
      loop, images, model, cfg, log, [&](const SceneImage& img, int epoch, StageReport& rep) {
        const std::uint64_t view_seed =
            derive_seed(cfg.seed, stream_id(loop.tag, task,
                                            (static_cast<std::uint64_t>(epoch) << 32) ^
                                                static_cast<std::uint64_t>(img.id)));
        const AugmentedView aug = augment_view(img, view_seed);
        const DetectorOutput out_i = model.forward(img.raster);
        const DetectorOutput out_a = model.forward(aug.image.raster);
        const auto preds_i = out_i.heads.predictions();
        const auto preds_a = out_a.heads.predictions();

        const KeyedProposals ss_i = key_proposals(proposals.get(img));
        const KeyedProposals ss_a = transfer_proposals(ss_i, aug.transform, cfg.pseudo.min_retention);
        const SwappedTargets sw = build_swapped_targets(
            aug.transform, preds_i, preds_a, img.annotations, aug.image.annotations, ss_i, ss_a,
            cfg.pseudo, unknown_label);

        for (const auto* set : {&sw.y_u, &sw.y_u_aug}) {
          const auto& annotated = set == &sw.y_u ? img.annotations : aug.image.annotations;
          for (const auto& t : *set) {
            if (t.source == TargetSource::annotated) continue;
            ++rep.pseudo_targets;
            if (max_iou_with(t.box, annotated) > cfg.pseudo.overlap_iou) ++rep.pseudo_violations;
          }
        }
        if (options.audit) options.audit(img, sw.y_u, aug.image, sw.y_u_aug);

        ViewLoss view{sw.y_u, &out_i.heads, dual_match(sw.y_u, preds_i, cfg.cost)};
        ViewLoss view_a{sw.y_u_aug, &out_a.heads, dual_match(sw.y_u_aug, preds_a, cfg.cost)};
        const auto pairs = consistency_pairs(sw.y_u, sw.y_u_aug, view.assignment.class_assignment,
                                             view_a.assignment.class_assignment);
        if (!options.teacher) return total_owl_loss(view, view_a, pairs, cfg.loss);
        const DistillTerms d = make_distill(*options.teacher, img.raster, img.annotations, out_i,
                                            preds_i, cfg);
        const DistillTerms d_a = make_distill(*options.teacher, aug.image.raster,
                                              aug.image.annotations, out_a, preds_a, cfg);
        return total_owl_loss_with_kd(view, view_a, pairs, d, d_a, cfg.loss);
      });
  json j;
  j["stage"] = loop.tag;
  j["task"] = task;
  j["pseudo_targets"] = report.pseudo_targets;
  j["pseudo_violations"] = report.pseudo_violations;
  log.record(j.dump());
  return report;
}

ExemplarStore refresh_exemplars(const ExemplarStore& store,
                                std::span<const SceneImage* const> images,
                                const TaskSchedule& schedule, std::size_t task,
                                const RunConfig& cfg, TrainLog& log) {
  std::vector<const SceneImage*> pool;
  for (const auto& img : store.images) pool.push_back(&img);
  pool.insert(pool.end(), images.begin(), images.end());
  ExemplarStore next = exemplar_select_balanced(pool, schedule.known(task), cfg.exemplar_cap,
                                                derive_seed(cfg.seed, stream_id("exemplar", task, 0)));
  json j;
  j["stage"] = "exemplars";
  j["task"] = task;
  j["images"] = next.images.size();
  for (const auto& [c, n] : next.instances) j["instances"][std::to_string(c)] = n;
  log.record(j.dump());
  return next;
}

void run_incremental_step(std::size_t next_task, std::span<const SceneImage* const> images,
                          Detector& model, ExemplarStore& store, const TaskSchedule& schedule,
                          const RunConfig& cfg, ProposalCache& proposals, TrainLog& log) {
  const auto new_known = static_cast<std::size_t>(schedule.known_count(next_task));
  if (new_known <= model.num_known()) {
    throw std::invalid_argument("incremental step: class count must grow (" +
                                std::to_string(model.num_known()) + " -> " +
                                std::to_string(new_known) + ")");
  }
  const Detector teacher = model.snapshot_teacher();
  model.expand_class_head(new_known, derive_seed(cfg.seed, stream_id("expand", next_task, 0)));

  StageOptions opts;
  opts.teacher = cfg.use_kd ? &teacher : nullptr;
  opts.tag = "pretrain";
  run_pretrain_stage(next_task, images, model, cfg, log, opts);
  opts.tag = "owl";
  run_owl_stage(next_task, images, model, cfg, proposals, log, opts);

  store = refresh_exemplars(store, images, schedule, next_task, cfg, log);

  if (cfg.use_replay && !store.images.empty()) {
    std::vector<const SceneImage*> replay;
    for (const auto& img : store.images) replay.push_back(&img);
    run_finetune_stage(next_task, replay, model, cfg, log, {});
  }
}

// ---- evaluation ------------------------------------------------------------------

std::vector<Detection> detect(const Detector& model, std::span<const SceneImage* const> images,
                              int top_k) {
  const Detector frozen = model.snapshot_teacher();
  std::vector<Detection> out;
  for (const auto* img : images) {
    const auto preds = frozen.forward(img->raster).heads.predictions();
    const auto dets = inference_postprocess(preds, frozen.num_known(), top_k, img->id);
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

std::vector<GroundTruth> ground_truth_of(std::span<const SceneImage* const> images) {
  std::vector<GroundTruth> gt;
  for (const auto* img : images)
    for (const auto& o : img->objects) gt.push_back({img->id, o.label, o.box});
  return gt;
}

EvalReport evaluate_model(const Detector& model, std::span<const SceneImage* const> images,
                          const TaskSchedule& schedule, std::size_t task, const RunConfig& cfg,
                          std::vector<Detection>* detections_out) {
  if (static_cast<int>(model.num_known()) != schedule.known_count(task)) {
    throw std::invalid_argument("evaluate_model: model knows " + std::to_string(model.num_known()) +
                                " classes, task " + std::to_string(task) + " expects " +
                                std::to_string(schedule.known_count(task)));
  }
  const auto dets = detect(model, images, cfg.top_k);
  const auto gt = ground_truth_of(images);
  EvalReport r = evaluate_split(dets, gt, images.size(), schedule, task, cfg.eval);
  if (detections_out) *detections_out = dets;
  return r;
}

double objectness_auc(const Detector& model, std::span<const SceneImage* const> images,
                      const RunConfig& cfg) {
  const Detector frozen = model.snapshot_teacher();
  std::vector<double> pos, neg;
  for (const auto* img : images) {
    std::vector<Target> known, unknown;
    for (const auto& o : img->objects) {
      (o.label <= static_cast<int>(frozen.num_known()) ? known : unknown).push_back(o);
    }
    const auto preds = frozen.forward(img->raster).heads.predictions();
    const auto bin = to_binary_targets(known);
    const Assignment a = hungarian_solve(binary_match_cost(bin, preds, cfg.cost));
    std::vector<int> role(preds.size(), 0);
    for (const auto& [t, q] : a.pairs) role[q] = 1;
    if (!unknown.empty()) {
      const Assignment u = hungarian_solve(binary_match_cost(to_binary_targets(unknown), preds, cfg.cost));
      for (const auto& [t, q] : u.pairs)
        if (role[q] == 0) role[q] = -1;
    }
    for (std::size_t q = 0; q < preds.size(); ++q) {
      if (role[q] == 1) pos.push_back(preds[q].objectness());
      if (role[q] == 0) neg.push_back(preds[q].objectness());
    }
  }
  if (pos.empty() || neg.empty()) return 0.5;
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace owdetr
