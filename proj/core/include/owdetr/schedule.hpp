#pragma once

#include <cstddef>
#include <vector>

namespace owdetr {

/// Ordered class groups. Class ids are 1..C and group t holds the next
/// contiguous block, so the known classes at task t are exactly 1..|K^t| and
/// a class id doubles as its class-head slot.
class TaskSchedule {
 public:
  TaskSchedule() = default;
  /// Throws std::invalid_argument on empty, overlapping or non-contiguous groups.
  explicit TaskSchedule(std::vector<std::vector<int>> groups);

  static TaskSchedule even(int num_classes, int num_tasks);

  std::size_t num_tasks() const { return groups_.size(); }
  int num_classes() const { return num_classes_; }
  const std::vector<std::vector<int>>& groups() const { return groups_; }
  const std::vector<int>& group(std::size_t t) const;

  /// Tasks are 1-based.
  std::vector<int> known(std::size_t t) const;
  std::vector<int> unknown(std::size_t t) const;
  std::vector<int> previously_known(std::size_t t) const;
  int known_count(std::size_t t) const;
  bool is_known(int cls, std::size_t t) const { return cls >= 1 && cls <= known_count(t); }
  /// Task that introduces the class.
  std::size_t task_of(int cls) const;

 private:
  std::vector<std::vector<int>> groups_;
  int num_classes_ = 0;
};

}  // namespace owdetr
