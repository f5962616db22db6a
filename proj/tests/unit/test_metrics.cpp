#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "owdetr/metrics.hpp"
#include "support/golden.hpp"
#include "support/oracles.hpp"

using namespace owdetr;

namespace {

BoxCXCYWH cell(int i) { return {0.1 + 0.2 * (i % 5), 0.1 + 0.2 * (i / 5 % 5), 0.15, 0.15}; }

}  // namespace

TEST(VocAp, PerfectDetections) {
  std::vector<GroundTruth> gt{{1, 1, cell(0)}, {1, 1, cell(3)}, {2, 1, cell(7)}};
  std::vector<Detection> dets;
  for (const auto& g : gt) dets.push_back({g.image_id, 1, 0.9, g.box});
  EXPECT_DOUBLE_EQ(*voc_ap50(dets, gt, 1), 1.0);
}

TEST(VocAp, FalsePositiveFirstGivesHalf) {
  std::vector<GroundTruth> gt{{1, 1, cell(0)}};
  std::vector<Detection> dets{{1, 1, 0.95, cell(4)}, {1, 1, 0.9, cell(0)}};
  EXPECT_DOUBLE_EQ(*voc_ap50(dets, gt, 1), 0.5);
}

TEST(VocAp, AbsentClassIsUndefined) {
  std::vector<GroundTruth> gt{{1, 1, cell(0)}};
  EXPECT_FALSE(voc_ap50({}, gt, 2).has_value());
  EXPECT_DOUBLE_EQ(*voc_ap50({}, gt, 1), 0.0);
}

TEST(VocAp, MatchesBruteForceOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1), jitter(-0.06, 0.06);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GroundTruth> gt;
    const int ngt = 1 + static_cast<int>(u(rng) * 6);
    for (int i = 0; i < ngt; ++i) gt.push_back({1 + i % 3, 1 + (i % 2), cell(static_cast<int>(u(rng) * 25))});
    std::vector<Detection> dets;
    const int nd = static_cast<int>(u(rng) * 11);
    for (int i = 0; i < nd; ++i) {
      const auto& g = gt[static_cast<std::size_t>(u(rng) * gt.size())];
      BoxCXCYWH b = g.box;
      b.cx += jitter(rng);
      b.cy += jitter(rng);
      // coarse scores force ties
      dets.push_back({g.image_id, 1 + static_cast<int>(u(rng) * 2), std::round(u(rng) * 4) / 4, b});
    }
    for (int cls : {1, 2}) {
      const double want = oracle::brute_force_ap(dets, gt, cls);
      const auto got = voc_ap50(dets, gt, cls);
      if (std::isnan(want)) {
        EXPECT_FALSE(got.has_value());
      } else {
        ASSERT_TRUE(got.has_value());
        EXPECT_NEAR(*got, want, 1e-9) << "trial " << trial;
      }
    }
  }
}

TEST(URecall, Examples) {
  std::vector<GroundTruth> unk{{1, kUnknownLabel, cell(0)}, {1, kUnknownLabel, cell(2)},
                               {2, kUnknownLabel, cell(4)}, {2, kUnknownLabel, cell(6)}};
  std::vector<Detection> dets{{1, kUnknownLabel, 0.9, cell(0)},
                              {1, kUnknownLabel, 0.8, cell(2)},
                              {2, kUnknownLabel, 0.7, cell(4)},
                              {2, 1, 0.9, cell(6)}};
  EXPECT_DOUBLE_EQ(*u_recall(dets, unk), 0.75);
  EXPECT_DOUBLE_EQ(*u_recall({}, unk), 0.0);
  dets.push_back({2, kUnknownLabel, 0.1, cell(6)});
  EXPECT_DOUBLE_EQ(*u_recall(dets, unk), 1.0);
  EXPECT_FALSE(u_recall(dets, {}).has_value());
}

TEST(AOse, Examples) {
  std::vector<GroundTruth> unk{{1, kUnknownLabel, cell(0)}, {1, kUnknownLabel, cell(8)}};
  const std::vector<Detection> one{{1, 2, 0.9, cell(0)}};
  EXPECT_EQ(a_ose(one, {}), 0);
  EXPECT_EQ(a_ose(one, unk), 1);
  // hand IoU table: on unknown, other image, unknown-labelled, below floor, off target
  std::vector<Detection> dets{{1, 1, 0.9, cell(8)},
                              {2, 1, 0.9, cell(8)},
                              {1, kUnknownLabel, 0.9, cell(0)},
                              {1, 2, 0.01, cell(0)},
                              {1, 2, 0.9, cell(12)}};
  EXPECT_EQ(a_ose(dets, unk), 1);
}

TEST(WildernessImpact, TrivialCases) {
  std::vector<GroundTruth> known{{1, 1, cell(0)}, {1, 1, cell(2)}};
  std::vector<GroundTruth> unk{{1, kUnknownLabel, cell(10)}};
  std::vector<Detection> dets{{1, 1, 0.9, cell(0)}, {1, 1, 0.8, cell(5)}, {1, 1, 0.7, cell(2)}};
  EXPECT_DOUBLE_EQ(*wilderness_impact(dets, known, {}), 0.0);
  EXPECT_DOUBLE_EQ(*wilderness_impact(dets, known, unk), 0.0);
  EXPECT_FALSE(wilderness_impact(std::span(dets).first(1), known, unk).has_value());
  EXPECT_THROW(wilderness_impact(dets, known, unk, 0.0), std::invalid_argument);
}

TEST(WildernessImpact, PrecisionPointNineVersusPointEight) {
  // 45 known boxes, one per image. At the operating point (36 TP, recall 0.8)
  // 45 detections were made, 5 of them on unknown objects: P_closed 36/40, P_open 36/45.
  std::vector<GroundTruth> known, unk;
  std::vector<Detection> dets;
  for (int i = 0; i < 45; ++i) known.push_back({i, 1, cell(0)});
  for (int i = 0; i < 5; ++i) unk.push_back({100 + i, kUnknownLabel, cell(1)});
  double score = 0.99;
  for (int i = 0; i < 45; ++i) {
    if (i < 5) dets.push_back({100 + i, 1, score, cell(1)});
    else if (i < 9) dets.push_back({200 + i, 1, score, cell(1)});
    else dets.push_back({i - 9, 1, score, cell(0)});
    score -= 0.01;
  }
  EXPECT_NEAR(*wilderness_impact(dets, known, unk), 0.125, 1e-12);
}

TEST(Metrics, DuplicatesAndOrdering) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GroundTruth> unk;
    for (int i = 0; i < 4; ++i) unk.push_back({1 + i % 2, kUnknownLabel, cell(static_cast<int>(u(rng) * 25))});
    std::vector<Detection> dets;
    for (int i = 0; i < 8; ++i) {
      const int label = u(rng) < 0.5 ? kUnknownLabel : 1;
      dets.push_back({1 + static_cast<int>(u(rng) * 2), label, std::round(u(rng) * 3) / 3,
                      cell(static_cast<int>(u(rng) * 25))});
    }
    const auto ur = u_recall(dets, unk);
    const int ao = a_ose(dets, unk);
    auto doubled = dets;
    doubled.insert(doubled.end(), dets.begin(), dets.end());
    EXPECT_EQ(u_recall(doubled, unk), ur);
    EXPECT_GE(a_ose(doubled, unk), ao);
    auto shuffled = dets;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(u_recall(shuffled, unk), ur);
    EXPECT_EQ(a_ose(shuffled, unk), ao);
  }
}

TEST(RankingOrder, TieBreaks) {
  std::vector<Detection> dets{{3, 1, 0.5, cell(0)}, {1, 1, 0.5, cell(0)}, {1, 1, 0.9, cell(0)},
                              {1, 1, 0.5, cell(1)}};
  EXPECT_EQ(ranking_order(dets), (std::vector<std::size_t>{2, 1, 3, 0}));
}

TEST(EvaluateSplit, GoldenFixture) {
  const auto fx = golden::load(std::filesystem::path(OWDETR_TEST_DATA) / "golden_eval");
  const auto r = evaluate_split(fx.detections, fx.ground_truth, fx.num_images, fx.schedule, fx.task);
  EXPECT_EQ(golden::compare(r, fx.expected), "");
  EXPECT_EQ(r.task, 2u);
}

TEST(EvaluateSplit, PerfectDetectorOnToySplit) {
  TaskSchedule s({{1, 2}, {3}});
  std::vector<GroundTruth> gt{{1, 1, cell(0)}, {1, 3, cell(6)}, {2, 2, cell(12)}};
  std::vector<Detection> dets{{1, 1, 0.9, cell(0)}, {1, kUnknownLabel, 0.8, cell(6)}, {2, 2, 0.7, cell(12)}};
  const auto r = evaluate_split(dets, gt, 2, s, 1);
  EXPECT_DOUBLE_EQ(*r.map_both, 1.0);
  EXPECT_FALSE(r.map_previous.has_value());
  EXPECT_DOUBLE_EQ(*r.u_recall, 1.0);
  EXPECT_DOUBLE_EQ(*r.wi, 0.0);
  EXPECT_EQ(r.a_ose, 0);
  // every class known at task 2: no unknown ground truth
  const auto r2 = evaluate_split(dets, gt, 2, s, 2);
  EXPECT_FALSE(r2.u_recall.has_value());
  EXPECT_EQ(r2.num_unknown_gt, 0u);
}

TEST(EvaluateSplit, Rejections) {
  TaskSchedule s({{1}, {2}});
  std::vector<GroundTruth> gt{{1, 1, cell(0)}};
  EXPECT_THROW(evaluate_split({}, gt, 0, s, 1), std::invalid_argument);
  EXPECT_THROW(evaluate_split({}, {}, 1, s, 1), std::invalid_argument);
  std::vector<Detection> bad{{1, 1, 1.5, cell(0)}};
  EXPECT_THROW(evaluate_split(bad, gt, 1, s, 1), std::invalid_argument);
}

TEST(Report, JsonRoundTrip) {
  const auto fx = golden::load(std::filesystem::path(OWDETR_TEST_DATA) / "golden_eval");
  const auto r = evaluate_split(fx.detections, fx.ground_truth, fx.num_images, fx.schedule, fx.task);
  const std::string text = report_json(r, {{"seed", "7"}});
  const auto back = report_from_json(text);
  EXPECT_EQ(report_json(back, {{"seed", "7"}}), text);
  EXPECT_EQ(golden::compare(back, fx.expected), "");
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j.at("seed"), "7");
  EXPECT_TRUE(j.at("map_previous").is_number());
}

TEST(Report, CsvAndTable) {
  EvalReport a;
  a.task = 1;
  a.u_recall = 0.25;
  a.map_current = 0.5;
  a.map_both = 0.5;
  EvalReport b = a;
  b.task = 2;
  b.map_previous = 1.0 / 3.0;
  b.wi = 0.125;
  b.a_ose = 4;
  std::vector<EvalReport> rows{a, b};
  std::istringstream csv(report_csv(rows));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "task,u_recall,wi,a_ose,map_previous,map_current,map_both");
  std::getline(csv, line);
  EXPECT_EQ(line, "1,0.25,,0,,0.5,0.5");
  std::getline(csv, line);
  std::vector<std::string> fields;
  std::stringstream ls(line);
  for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
  ASSERT_EQ(fields.size(), 7u);
  EXPECT_EQ(std::stod(fields[4]), 1.0 / 3.0);
  EXPECT_EQ(fields[3], "4");

  const std::string table = report_table(rows);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_NE(table.find("U-Recall"), std::string::npos);
  EXPECT_NE(table.find("33.3"), std::string::npos);
}
