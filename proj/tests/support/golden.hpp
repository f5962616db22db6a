#pragma once

// Loader for the hand-evaluated metrics fixture in tests/data/golden_eval.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "owdetr/metrics.hpp"
#include "owdetr/schedule.hpp"

namespace golden {

struct Fixture {
  owdetr::TaskSchedule schedule;
  std::size_t task = 1;
  std::size_t num_images = 0;
  std::vector<owdetr::GroundTruth> ground_truth;
  std::vector<owdetr::Detection> detections;
  nlohmann::json expected;
};

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return nlohmann::json::parse(ss.str());
}

inline owdetr::BoxCXCYWH box_of(const nlohmann::json& j) {
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline Fixture load(const std::filesystem::path& dir) {
  const auto f = read_json(dir / "fixture.json");
  Fixture out;
  out.schedule = owdetr::TaskSchedule(f.at("groups").get<std::vector<std::vector<int>>>());
  out.task = f.at("task").get<std::size_t>();
  out.num_images = f.at("num_images").get<std::size_t>();
  for (const auto& g : f.at("ground_truth"))
    out.ground_truth.push_back({g.at("image_id").get<int>(), g.at("label").get<int>(), box_of(g.at("box"))});
  for (const auto& d : f.at("detections"))
    out.detections.push_back({d.at("image_id").get<int>(), d.at("label").get<int>(),
                              d.at("score").get<double>(), box_of(d.at("box"))});
  out.expected = read_json(dir / "expected.json");
  return out;
}

inline double fraction(const nlohmann::json& j) { return j[0].get<double>() / j[1].get<double>(); }

/// Empty string when the report equals the hand evaluation, else a description.
inline std::string compare(const owdetr::EvalReport& r, const nlohmann::json& e) {
  std::ostringstream bad;
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  auto check = [&](const char* name, const std::optional<double>& got, const nlohmann::json& want) {
    if (want.is_null() ? got.has_value() : (!got || !same(*got, fraction(want))))
      bad << name << ' ';
  };
  if (r.num_images != e.at("num_images").get<std::size_t>()) bad << "num_images ";
  if (r.num_known_gt != e.at("num_known_gt").get<std::size_t>()) bad << "num_known_gt ";
  if (r.num_unknown_gt != e.at("num_unknown_gt").get<std::size_t>()) bad << "num_unknown_gt ";
  if (r.class_ap.size() != e.at("class_ap50").size()) bad << "class_ap50 ";
  for (const auto& [k, v] : e.at("class_ap50").items()) {
    auto it = r.class_ap.find(std::stoi(k));
    if (it == r.class_ap.end()) bad << "class_ap50[" << k << "] ";
    else check(("class_ap50[" + k + "]").c_str(), it->second, v);
  }
  check("map_previous", r.map_previous, e.at("map_previous"));
  check("map_current", r.map_current, e.at("map_current"));
  check("map_both", r.map_both, e.at("map_both"));
  check("u_recall", r.u_recall, e.at("u_recall"));
  check("wi", r.wi, e.at("wi"));
  if (r.a_ose != e.at("a_ose").get<int>()) bad << "a_ose ";
  return bad.str();
}

}  // namespace golden
