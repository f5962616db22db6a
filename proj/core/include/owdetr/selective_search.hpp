#pragma once

// Region proposals by graph-based over-segmentation followed by greedy
// hierarchical grouping on color, size and fill similarity.

#include <array>
#include <cstdint>
#include <vector>

#include "owdetr/geometry.hpp"
#include "owdetr/raster.hpp"

namespace owdetr {

struct Segmentation {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // row-major region id per pixel
  int region_count = 0;
};

/// Minimum-spanning-tree segmentation over the 4-connected pixel graph with
/// RGB Euclidean edge weights and threshold tau(C) = k / |C|. Components
/// smaller than min_size are then merged into their cheapest neighbour.
/// sigma > 0 smooths the image with a Gaussian first. Region ids follow the
/// raster-scan order of each region's first pixel.
Segmentation graph_segment(const Raster& image, double k, int min_size, double sigma = 0.0);

inline constexpr int kHistogramBins = 25;

struct Region {
  int size = 0;
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // inclusive pixel bounds
  std::array<double, 3 * kHistogramBins> histogram{};  // L1-normalized per channel

  int box_area() const { return (x2 - x1 + 1) * (y2 - y1 + 1); }
};

/// Per-region statistics of a segmentation, indexed by region id.
std::vector<Region> describe_regions(const Segmentation& seg, const Raster& image);

Region merge_regions(const Region& a, const Region& b);

/// Mean of the color, size and fill similarities, each in [0,1]. The color
/// term is the histogram intersection averaged over the three channels.
double region_similarity(const Region& a, const Region& b, int image_size);

struct SimilarityTerms {
  double color, size, fill;
};
SimilarityTerms similarity_terms(const Region& a, const Region& b, int image_size);

struct MergeTrace {
  std::vector<Region> regions;             // initial regions, then one per merge
  std::vector<std::pair<int, int>> merges;  // parents of region initial + i
};

/// Greedy grouping of the most similar adjacent pair until one region is
/// left (or no adjacent pair remains).
MergeTrace merge_hierarchy(const Segmentation& seg, const Raster& image);

/// Bounding boxes of every region in the hierarchy, ranked by
/// (position from the top of the hierarchy) x uniform(0,1) ascending, with a
/// generator seeded by `seed`. Duplicate boxes keep their best rank.
std::vector<BoxCXCYWH> hierarchical_merge(const Segmentation& seg, const Raster& image,
                                          std::uint64_t seed);

struct SelectiveSearchConfig {
  double k = 200.0;
  int min_size = 20;
  double sigma = 0.8;
  std::uint64_t seed = 1;
};

std::vector<BoxCXCYWH> selective_search(const Raster& image, const SelectiveSearchConfig& config);

}  // namespace owdetr
