#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "owdetr/losses.hpp"
#include "support/loss_cases.hpp"

using namespace owdetr;
using loss_cases::RawHeads;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double focal_entry(double logit, double target, double alpha, double gamma) {
  const double p = sig(logit);
  const double pt = target > 0.5 ? p : 1 - p;
  const double at = target > 0.5 ? alpha : 1 - alpha;
  return -at * std::pow(1 - pt, gamma) * std::log(std::max(pt, 1e-12));
}

// Scalar re-derivation of the Hungarian loss with the binary term.
double hungarian_oracle(const std::vector<Target>& targets, const HeadOutputs& o,
                        const DualAssignment& a, const LossWeights& w) {
  const std::size_t n = o.num_queries(), k = o.num_slots();
  std::vector<int> cls_of(n, 0);
  std::vector<int> fg(n, 0);
  double box = 0;
  for (auto [t, p] : a.class_assignment.pairs) {
    cls_of[p] = targets[t].label;
    BoxCXCYWH pb{o.boxes.at(p, 0), o.boxes.at(p, 1), o.boxes.at(p, 2), o.boxes.at(p, 3)};
    const BoxCXCYWH& tb = targets[t].box;
    box += w.l1 * (std::fabs(pb.cx - tb.cx) + std::fabs(pb.cy - tb.cy) + std::fabs(pb.w - tb.w) +
                   std::fabs(pb.h - tb.h)) +
           w.giou * (1 - giou(tb, pb));
  }
  for (auto [t, p] : a.binary_assignment.pairs) fg[p] = 1;
  double cls = 0, bin = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      cls += focal_entry(o.class_logits.at(i, c), cls_of[i] == static_cast<int>(c) + 1, w.focal_alpha,
                         w.focal_gamma);
    }
    bin += focal_entry(o.binary_logits.at(i, 0), fg[i], w.focal_alpha, w.focal_gamma);
  }
  const double norm = std::max<std::size_t>(1, targets.size());
  return (w.cls * cls + box + w.cls * w.b_cls * bin) / norm;
}

}  // namespace

TEST(FocalLoss, Examples) {
  const Tensor one = Tensor::matrix(1, 1, {1.0});
  EXPECT_NEAR(sigmoid_focal_loss(Tensor::matrix(1, 1, {0.0}), one, 0.25, 2.0).item(),
              0.25 * 0.25 * -std::log(0.5), 1e-12);
  EXPECT_NEAR(0.25 * 0.25 * std::log(2.0), 0.04332, 1e-5);
  EXPECT_LT(sigmoid_focal_loss(Tensor::matrix(1, 1, {20.0}), one, 0.25, 2.0).item(), 1e-6);
  std::mt19937_64 rng(3);
  const Tensor x = loss_cases::random_leaf({3, 4}, rng, -4, 4).detach();
  std::vector<double> t(12);
  for (auto& v : t) v = static_cast<double>(rng() % 2);
  double bce = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    const double p = sig(x.at(i));
    bce -= t[i] * std::log(p) + (1 - t[i]) * std::log(1 - p);
  }
  EXPECT_NEAR(sigmoid_focal_loss(x, Tensor({3, 4}, t), std::nullopt, 0.0).item(), bce, 1e-9);
  EXPECT_THROW(sigmoid_focal_loss(x, Tensor::zeros({4, 3}), 0.25, 2.0), ShapeError);
}

TEST(BoxLoss, Examples) {
  const Tensor a = Tensor::matrix(1, 4, {0.5, 0.5, 1, 1});
  const Tensor b = Tensor::matrix(1, 4, {0.5, 0.5, 0.5, 0.5});
  EXPECT_NEAR(box_loss(a, b, 5.0, 2.0).item(), 6.5, 1e-12);
  EXPECT_NEAR(box_loss(a, a, 5.0, 2.0).item(), 0.0, 1e-15);
  std::mt19937_64 rng(4);
  const auto ts = loss_cases::random_targets(6, 1, rng);
  const Tensor g = generalized_iou(boxes_tensor(ts), boxes_tensor(std::span(ts).first(6)));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g.at(i), 1.0, 1e-12);
  const auto us = loss_cases::random_targets(6, 1, rng);
  const Tensor h = generalized_iou(boxes_tensor(ts), boxes_tensor(us));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(h.at(i), giou(ts[i].box, us[i].box), 1e-12);
}

TEST(HungarianLoss, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    RawHeads h = RawHeads::random(7, 5, 3, rng);
    const auto targets = loss_cases::random_targets(rng() % 4, 4, rng);
    const auto a = loss_cases::match(targets, h);
    const HeadOutputs o = h.outputs();
    LossWeights w;
    for (double b_cls : {1.0, 0.0}) {
      w.b_cls = b_cls;
      const double got = hungarian_loss_bin(targets, to_binary_targets(targets), o, a.class_assignment,
                                            a.binary_assignment, w)
                             .total.item();
      EXPECT_NEAR(got, hungarian_oracle(targets, o, a, w), 1e-9);
    }
  }
}

TEST(HungarianLoss, SingleTargetByHand) {
  const Tensor logits = Tensor::matrix(1, 2, {0.4, -1.0});
  const Tensor binary = Tensor::matrix(1, 1, {0.7});
  const Tensor boxes = Tensor::matrix(1, 4, {0.5, 0.5, 0.5, 0.5});
  const HeadOutputs o{logits, binary, boxes, Tensor::zeros({1, 2})};
  const std::vector<Target> t{{1, {0.5, 0.5, 1, 1}}};
  const DualAssignment a{{{{0, 0}}, 0}, {{{0, 0}}, 0}};
  const LossWeights w;
  const double expect = 2.0 * (focal_entry(0.4, 1, .25, 2) + focal_entry(-1.0, 0, .25, 2)) + 6.5 +
                        2.0 * focal_entry(0.7, 1, .25, 2);
  EXPECT_NEAR(hungarian_loss_bin(t, to_binary_targets(t), o, a.class_assignment, a.binary_assignment, w)
                  .total.item(),
              expect, 1e-12);
}

TEST(HungarianLoss, PerfectPredictionsVanish) {
  const std::vector<Target> t{{2, {0.3, 0.4, 0.2, 0.2}}};
  const HeadOutputs o{Tensor::matrix(2, 3, {-40, 40, -40, -40, -40, -40}),
                      Tensor::matrix(2, 1, {40, -40}),
                      Tensor::matrix(2, 4, {0.3, 0.4, 0.2, 0.2, 0.7, 0.7, 0.1, 0.1}),
                      Tensor::zeros({2, 2})};
  const auto a = dual_match(t, o.predictions(), CostWeights{});
  EXPECT_LT(hungarian_loss_bin(t, to_binary_targets(t), o, a.class_assignment, a.binary_assignment,
                               LossWeights{})
                .total.item(),
            1e-6);
}

TEST(HungarianLoss, PermutationInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 100);
    RawHeads h = RawHeads::random(6, 4, 3, rng);
    auto targets = loss_cases::random_targets(3, 3, rng);
    const HeadOutputs o = h.outputs();
    auto loss = [&](const std::vector<Target>& ts) {
      const auto a = dual_match(ts, o.predictions(), CostWeights{});
      return hungarian_loss_bin(ts, to_binary_targets(ts), o, a.class_assignment, a.binary_assignment,
                                LossWeights{})
          .total.item();
    };
    const double base = loss(targets);
    std::reverse(targets.begin(), targets.end());
    EXPECT_NEAR(loss(targets), base, 1e-9);
    std::rotate(targets.begin(), targets.begin() + 1, targets.end());
    EXPECT_NEAR(loss(targets), base, 1e-9);
  }
}

TEST(HungarianLoss, RejectsBadAssignment) {
  std::mt19937_64 rng(1);
  RawHeads h = RawHeads::random(3, 3, 2, rng);
  const auto targets = loss_cases::random_targets(1, 2, rng);
  const Assignment bad{{{0, 9}}, 0};
  EXPECT_THROW(hungarian_loss_bin(targets, to_binary_targets(targets), h.outputs(), bad, bad,
                                  LossWeights{}),
               std::out_of_range);
}

TEST(Consistency, Examples) {
  const Tensor q = Tensor::matrix(1, 2, {1, 2}), qa = Tensor::matrix(1, 2, {1.5, 1});
  const std::vector<std::pair<std::size_t, std::size_t>> one{{0, 0}};
  EXPECT_DOUBLE_EQ(consistency_loss(q, qa, one).item(), 1.5);
  EXPECT_DOUBLE_EQ(consistency_loss(q, q, one).item(), 0.0);
  EXPECT_DOUBLE_EQ(consistency_loss(q, qa, {}).item(), 0.0);
  EXPECT_THROW(consistency_loss(q, Tensor::zeros({1, 3}), one), ShapeError);
}

TEST(Consistency, EligibilityRule) {
  std::vector<Target> a{{1, {0.3, 0.3, 0.1, 0.1}, TargetSource::annotated, 0},
                        {5, {0.6, 0.6, 0.1, 0.1}, TargetSource::pseudo_binary, 1},
                        {5, {0.2, 0.7, 0.1, 0.1}, TargetSource::pseudo_ss, 1000}};
  std::vector<Target> b{a[2], a[1], a[0]};
  const Assignment sa{{{0, 4}, {1, 5}, {2, 6}}, 0}, sb{{{0, 1}, {1, 2}, {2, 3}}, 0};
  const auto pairs = consistency_pairs(a, b, sa, sb);
  EXPECT_EQ(pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{4, 3}, {6, 1}}));
  const std::vector<Target> only_binary{a[1]};
  EXPECT_TRUE(consistency_pairs(only_binary, only_binary, Assignment{{{0, 0}}, 0}, Assignment{{{0, 0}}, 0}).empty());
}

TEST(FeatureDistill, Examples) {
  const Tensor a = Tensor::matrix(1, 1, {3}), b = Tensor::matrix(1, 1, {1});
  EXPECT_DOUBLE_EQ(feat_distill_masked(a, b, std::vector<double>{0}).item(), 2.0);
  EXPECT_DOUBLE_EQ(feat_distill_masked(a, a, std::vector<double>{0}).item(), 0.0);
  EXPECT_DOUBLE_EQ(feat_distill_masked(a, b, std::vector<double>{1}).item(), 0.0);
  EXPECT_THROW(feat_distill_masked(a, Tensor::zeros({2, 1}), std::vector<double>{0}), ShapeError);
}

TEST(FeatureDistill, MaskedCellsIgnored) {
  std::mt19937_64 rng(6);
  const Tensor cur = loss_cases::random_leaf({5, 3}, rng).detach();
  const Tensor pre = loss_cases::random_leaf({5, 3}, rng).detach();
  const std::vector<double> mask{1, 0, 1, 0, 0};
  std::vector<double> changed(cur.values().begin(), cur.values().end());
  for (std::size_t k = 0; k < 3; ++k) {
    changed[0 * 3 + k] += 10;
    changed[2 * 3 + k] -= 7;
  }
  EXPECT_DOUBLE_EQ(feat_distill_masked(cur, pre, mask).item(),
                   feat_distill_masked(Tensor({5, 3}, changed), pre, mask).item());
}

TEST(KlDistill, Examples) {
  const Tensor p = Tensor::matrix(1, 2, {0.5, 0.5});
  EXPECT_NEAR(kl_class_distill(p, Tensor::matrix(1, 2, {1, 0})).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(kl_class_distill(p, p).item(), 0.0, 1e-15);
  EXPECT_THROW(kl_class_distill(Tensor::matrix(1, 2, {0.5, 0.6}), p), std::invalid_argument);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const Tensor a = loss_cases::random_probabilities(2, 4, rng);
    const Tensor b = loss_cases::random_probabilities(2, 4, rng);
    EXPECT_GE(kl_class_distill(a, b).item(), 0.0);
  }
}

TEST(Totals, EqualSumOfComponents) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    RawHeads h = RawHeads::random(6, 4, 3, rng), ha = RawHeads::random(6, 4, 3, rng);
    const auto targets = loss_cases::random_targets(2, 3, rng);
    const auto a = loss_cases::match(targets, h), aa = loss_cases::match(targets, ha);
    const HeadOutputs o = h.outputs(), oa = ha.outputs();
    const ViewLoss v{targets, &o, a}, va{targets, &oa, aa};
    const auto pairs = consistency_pairs(targets, targets, a.class_assignment, aa.class_assignment);
    LossWeights w;
    w.con = 0.7;
    w.feat = 0.3;
    w.cls_kd = 1.5;
    w.feat_aug = 2.0;
    w.cls_kd_aug = 0.25;
    auto hung = [&](const ViewLoss& x) {
      return hungarian_loss_bin(targets, to_binary_targets(targets), *x.outputs,
                                x.assignment.class_assignment, x.assignment.binary_assignment, w)
          .total.item();
    };
    const double con = consistency_loss(o.query_features, oa.query_features, pairs).item();
    const DistillTerms d{loss_cases::random_leaf({4, 3}, rng).detach(), loss_cases::random_leaf({4, 3}, rng).detach(),
                         {0, 1, 0, 0}, loss_cases::random_probabilities(2, 3, rng),
                         loss_cases::random_probabilities(2, 3, rng)};
    const DistillTerms da{loss_cases::random_leaf({4, 3}, rng).detach(), loss_cases::random_leaf({4, 3}, rng).detach(),
                          {0, 0, 0, 1}, loss_cases::random_probabilities(2, 3, rng),
                          loss_cases::random_probabilities(2, 3, rng)};
    auto kd = [&](const DistillTerms& x, double wf, double wc) {
      return wf * feat_distill_masked(x.f_cur, x.f_pre, x.mask).item() + wc * kl_class_distill(x.p_cur, x.p_pre).item();
    };
    EXPECT_NEAR(total_pretrain_loss(v, nullptr, w).total.item(), hung(v), 1e-9);
    EXPECT_NEAR(total_pretrain_loss(v, &d, w).total.item(), hung(v) + kd(d, w.feat, w.cls_kd), 1e-9);
    EXPECT_NEAR(total_owl_loss(v, va, pairs, w).total.item(), hung(v) + hung(va) + w.con * con, 1e-9);
    EXPECT_NEAR(total_owl_loss_with_kd(v, va, pairs, d, da, w).total.item(),
                hung(v) + hung(va) + w.con * con + kd(d, w.feat, w.cls_kd) + kd(da, w.feat_aug, w.cls_kd_aug),
                1e-9);

    LossWeights zero = w;
    zero.con = 0;
    EXPECT_DOUBLE_EQ(total_owl_loss(v, va, pairs, zero).total.item(), hung(v) + hung(va));
    zero.feat = zero.cls_kd = zero.feat_aug = zero.cls_kd_aug = 0;
    EXPECT_DOUBLE_EQ(total_pretrain_loss(v, &d, zero).total.item(), hung(v));
    EXPECT_NEAR(total_owl_loss_with_kd(v, va, pairs, d, da, zero).total.item(),
                total_owl_loss(v, va, pairs, zero).total.item(), 1e-12);
    const DistillTerms same{d.f_cur, d.f_cur, d.mask, d.p_cur, d.p_cur};
    EXPECT_NEAR(kd(same, 1, 1), 0.0, 1e-12);
  }
}

TEST(Totals, IdenticalPerfectViewsVanish) {
  const std::vector<Target> t{{1, {0.3, 0.4, 0.2, 0.2}, TargetSource::annotated, 0}};
  const HeadOutputs o{Tensor::matrix(2, 2, {40, -40, -40, -40}), Tensor::matrix(2, 1, {40, -40}),
                      Tensor::matrix(2, 4, {0.3, 0.4, 0.2, 0.2, 0.7, 0.7, 0.1, 0.1}),
                      Tensor::matrix(2, 2, {1, 2, 3, 4})};
  const auto a = dual_match(t, o.predictions(), CostWeights{});
  const ViewLoss v{t, &o, a};
  const auto pairs = consistency_pairs(t, t, a.class_assignment, a.class_assignment);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_LT(total_owl_loss(v, v, pairs, LossWeights{}).total.item(), 1e-6);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.con = -1;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

class LossGradient : public ::testing::TestWithParam<loss_cases::Case> {};

TEST_P(LossGradient, FiniteDifferencesOnTenInstances) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    EXPECT_LT(GetParam().probe(rng), 1e-3) << GetParam().name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(All, LossGradient, ::testing::ValuesIn(loss_cases::all_cases()),
                         [](const auto& info) { return info.param.name; });
