#pragma once

// Run configuration: every tunable of the pipeline with its default, read
// from and written to a `key = value` text file.

#include <cstdint>
#include <filesystem>
#include <string>

#include "owdetr/dataset.hpp"
#include "owdetr/detector.hpp"
#include "owdetr/losses.hpp"
#include "owdetr/matching.hpp"
#include "owdetr/metrics.hpp"
#include "owdetr/pseudo_label.hpp"
#include "owdetr/selective_search.hpp"

namespace owdetr {

struct RunConfig {
  std::uint64_t seed = 7;

  SyntheticConfig data;
  DetectorConfig detector;  // num_known is set per task
  LossWeights loss;
  CostWeights cost;
  PseudoLabelConfig pseudo;
  SelectiveSearchConfig ss;
  EvalOptions eval;

  std::string optimizer = "adam";
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double clip_norm = 0.1;
  double lr_decay = 0.1;
  int batch_size = 2;

  int pretrain_epochs = 30;
  int pretrain_decay_epoch = 24;
  int owl_epochs = 5;
  int owl_decay_epoch = 3;
  int finetune_epochs = 5;
  int finetune_decay_epoch = 4;

  double teacher_threshold = 0.5;
  int exemplar_cap = 50;
  /// "stage2" or "none".
  std::string finetune_freeze = "stage2";
  bool use_kd = true;
  bool use_replay = true;
  int top_k = 50;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;

  /// Canonical `key = value` text, one key per line in a fixed order.
  std::string serialize() const;
  /// FNV-1a of serialize().
  std::uint64_t hash() const;
  std::string hash_hex() const;

  /// Applies one key; throws std::invalid_argument for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
};

/// Defaults overlaid with the file's assignments. Blank lines and `#`
/// comments are ignored. Errors carry the line number.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

}  // namespace owdetr
