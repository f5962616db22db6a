#include "owdetr/schedule.hpp"

#include <stdexcept>
#include <string>

namespace owdetr {

TaskSchedule::TaskSchedule(std::vector<std::vector<int>> groups) : groups_(std::move(groups)) {
  if (groups_.empty()) throw std::invalid_argument("schedule: no class groups");
  int next = 1;
  for (std::size_t t = 0; t < groups_.size(); ++t) {
    if (groups_[t].empty()) {
      throw std::invalid_argument("schedule: group " + std::to_string(t + 1) + " is empty");
    }
    for (int c : groups_[t]) {
      if (c != next) {
        throw std::invalid_argument("schedule: group " + std::to_string(t + 1) + " holds class " +
                                    std::to_string(c) + " where class " + std::to_string(next) +
                                    " was expected (groups must partition 1..C in order)");
      }
      ++next;
    }
  }
  num_classes_ = next - 1;
}

TaskSchedule TaskSchedule::even(int num_classes, int num_tasks) {
  if (num_tasks < 1 || num_classes < num_tasks || num_classes % num_tasks != 0) {
    throw std::invalid_argument("schedule: cannot split " + std::to_string(num_classes) +
                                " classes into " + std::to_string(num_tasks) + " equal groups");
  }
  const int per = num_classes / num_tasks;
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(num_tasks));
  for (int c = 1; c <= num_classes; ++c) groups[static_cast<std::size_t>((c - 1) / per)].push_back(c);
  return TaskSchedule(std::move(groups));
}

const std::vector<int>& TaskSchedule::group(std::size_t t) const {
  if (t < 1 || t > groups_.size()) {
    throw std::out_of_range("schedule: task " + std::to_string(t) + " out of range");
  }
  return groups_[t - 1];
}

int TaskSchedule::known_count(std::size_t t) const {
  int n = 0;
  for (std::size_t i = 1; i <= t; ++i) n += static_cast<int>(group(i).size());
  return n;
}

std::vector<int> TaskSchedule::known(std::size_t t) const {
  std::vector<int> out;
  for (int c = 1; c <= known_count(t); ++c) out.push_back(c);
  return out;
}

std::vector<int> TaskSchedule::unknown(std::size_t t) const {
  std::vector<int> out;
  for (int c = known_count(t) + 1; c <= num_classes_; ++c) out.push_back(c);
  return out;
}

std::vector<int> TaskSchedule::previously_known(std::size_t t) const {
  return t <= 1 ? std::vector<int>{} : known(t - 1);
}

std::size_t TaskSchedule::task_of(int cls) const {
  for (std::size_t t = 1; t <= groups_.size(); ++t)
    if (cls <= known_count(t) && cls >= 1) return t;
  throw std::out_of_range("schedule: class " + std::to_string(cls) + " not scheduled");
}

}  // namespace owdetr
