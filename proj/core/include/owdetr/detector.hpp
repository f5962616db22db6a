#pragma once

// Desk-scale query-based detector.
//
//   raster 64x64x3
//     -> backbone: 4x4 patch conv (stride 4) + 3x3 conv, 2x2 average pooling
//     -> projection: linear to the model width d; this grid is the feature
//        map used for distillation
//     -> decoder: N learned queries, one cross-attention layer + feed-forward
//     -> heads: class (n_known + 1 slots, last = unknown), binary objectness,
//        3-layer box regressor refined around the attention-weighted reference
//        point of each query.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "owdetr/raster.hpp"
#include "owdetr/tensor.hpp"
#include "owdetr/types.hpp"

namespace owdetr {

struct DetectorConfig {
  std::size_t image_size = 64;
  std::size_t patch = 4;
  std::size_t stem_channels = 16;
  std::size_t backbone_channels = 32;
  std::size_t model_dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t num_queries = 20;
  std::size_t num_known = 4;
  /// Prior foreground probability used to initialize classifier biases.
  double class_prior = 0.01;

  void validate() const;
  std::size_t grid() const { return image_size / patch / 2; }
  std::size_t tokens() const { return grid() * grid(); }
};

enum class Component : std::uint8_t {
  backbone,
  projection,
  decoder,
  class_head,
  binary_head,
  regression_head,
};
inline constexpr std::size_t kComponentCount = 6;
std::string to_string(Component c);

struct FreezePolicy {
  std::array<bool, kComponentCount> frozen{};

  static FreezePolicy none() { return {}; }
  static FreezePolicy all();
  /// Open-world learning: only the projection, class head and binary head train.
  static FreezePolicy stage2();

  bool is_frozen(Component c) const { return frozen[static_cast<std::size_t>(c)]; }
  void set(Component c, bool on) { frozen[static_cast<std::size_t>(c)] = on; }
};

struct Parameter {
  std::string name;
  Component component;
  Tensor value;
};

struct DetectorOutput {
  HeadOutputs heads;
  /// Projected feature grid, tokens x d (row-major over the grid).
  Tensor features;
};

class Detector {
 public:
  Detector(DetectorConfig config, std::uint64_t seed);

  /// Throws std::invalid_argument on a raster of the wrong size and
  /// std::runtime_error when an activation is not finite.
  DetectorOutput forward(const Raster& image) const;

  const DetectorConfig& config() const { return config_; }
  std::size_t num_known() const { return config_.num_known; }
  std::size_t num_slots() const { return config_.num_known + 1; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter& parameter(const std::string& name) const;

  /// Frozen parameters stop requiring gradients and are skipped by optimizers.
  void apply_freeze(const FreezePolicy& policy);
  const FreezePolicy& freeze_policy() const { return policy_; }
  bool trainable(const Parameter& p) const { return !policy_.is_frozen(p.component); }

  /// Grows the class head to new_known + 1 slots. Existing class rows are
  /// kept verbatim, the unknown row stays last, new rows are N(0, 0.01).
  void expand_class_head(std::size_t new_known, std::uint64_t seed);

  /// Deep copy with every parameter detached from gradient computation.
  Detector snapshot_teacher() const;
  /// Deep copy that keeps the freeze policy. Copy construction shares parameters.
  Detector clone() const;

  /// FNV-1a over the raw bytes of a component's parameter values.
  std::uint64_t component_hash(Component c) const;

  void save(const std::filesystem::path& path, std::uint64_t config_hash) const;
  /// Throws CheckpointError on malformed files or a config-hash mismatch.
  static Detector load(const std::filesystem::path& path, std::uint64_t expected_hash);
  static std::uint64_t read_config_hash(const std::filesystem::path& path);

 private:
  struct Constants;

  Detector() = default;
  const Tensor& p(std::size_t index) const { return params_[index].value; }
  void build_constants();

  DetectorConfig config_;
  std::vector<Parameter> params_;
  FreezePolicy policy_;
  std::shared_ptr<const Constants> constants_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// First-order optimizer over a detector's trainable parameters.
class Optimizer {
 public:
  enum class Kind { sgd, adam };

  /// clip_norm > 0 rescales the global gradient norm down to at most clip_norm.
  Optimizer(Kind kind, double weight_decay = 0.0, double clip_norm = 0.0);

  /// Applies one update from the accumulated gradients, then clears them.
  void step(Detector& model, double learning_rate);
  static Kind parse(const std::string& name);

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  Kind kind_;
  double weight_decay_;
  double clip_norm_;
  std::size_t steps_ = 0;
  std::vector<Moments> state_;
};

}  // namespace owdetr
