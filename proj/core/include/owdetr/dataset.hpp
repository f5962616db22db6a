#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "owdetr/geometry.hpp"
#include "owdetr/raster.hpp"
#include "owdetr/schedule.hpp"
#include "owdetr/types.hpp"

namespace owdetr {

struct SceneImage {
  int id = 0;
  Raster raster;
  /// Visible supervision. Training images only carry labels of their task's group.
  std::vector<Target> annotations;
  /// Every rendered object with its true label (equal to annotations for eval images).
  std::vector<Target> objects;
};

struct SplitManifest {
  TaskSchedule schedule;
  std::vector<std::string> class_names;  // index c - 1
  std::vector<std::vector<int>> train_ids;  // per task
  std::vector<int> eval_ids;                // shared by all tasks, true labels
};

struct Dataset {
  SplitManifest manifest;
  std::vector<SceneImage> images;  // sorted by id

  const SceneImage& image(int id) const;
  std::vector<const SceneImage*> train(std::size_t task) const;
  std::vector<const SceneImage*> eval() const;
};

struct SyntheticConfig {
  int num_classes = 8;
  int num_tasks = 2;
  int train_per_task = 200;
  int eval_images = 100;
  int image_size = 64;
  int min_objects = 1;
  int max_objects = 4;
  int min_side = 12;
  int max_side = 22;
  std::uint64_t seed = 7;
};

/// Shape archetype and color of a synthetic class (ids 1..8 cycle through
/// circle, square, triangle, cross within a color family).
enum class Shape2D : std::uint8_t { circle, square, triangle, cross };
Shape2D shape_of_class(int cls);
std::string synthetic_class_name(int cls);

/// Rasterized membership test for a shape filling the pixel square
/// [x0, x0+side) x [y0, y0+side).
bool shape_covers(Shape2D shape, int x0, int y0, int side, int px, int py);

Dataset generate_synthetic(const SyntheticConfig& config);

/// Random crop keeping 60-100% of each side, resized back with nearest
/// neighbour sampling. Annotations keeping less than 25% of their area are dropped.
struct AugmentedView {
  SceneImage image;
  CropTransform transform;
};

inline constexpr double kMinRetention = 0.25;

/// Applies an explicit crop window to an image and its annotations.
AugmentedView crop_view(const SceneImage& image, const CropTransform& t);
AugmentedView augment_view(const SceneImage& image, std::uint64_t seed);

// ---- storage -------------------------------------------------------------------

/// Writes manifest.json and images.owr (raw raster container) into dir.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Raster container: "OWRASTER", u32 version, u32 count, then per image
/// i32 id, u32 width, u32 height and width*height*3 bytes of RGB.
void write_raster_container(const std::filesystem::path& path,
                            const std::vector<std::pair<int, const Raster*>>& images);
std::vector<std::pair<int, Raster>> read_raster_container(const std::filesystem::path& path);

Raster read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Raster& raster);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CocoImport {
  Dataset data;
  std::vector<std::string> warnings;
};

/// Reads a COCO-format annotation file. Category ids are remapped in
/// ascending order onto 1..C and form a single task group. Images without
/// annotations are excluded from training. Rasters are read from PPM files
/// named by file_name (relative to the document) when present.
CocoImport load_coco_subset(const std::filesystem::path& path);

/// Writes the eval split (or the given ids) as a COCO document with pixel boxes.
void export_coco(const Dataset& data, const std::vector<int>& ids,
                 const std::filesystem::path& path);

}  // namespace owdetr
