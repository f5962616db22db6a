#include "owdetr/selective_search.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace owdetr {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(static_cast<std::size_t>(n)), size_(static_cast<std::size_t>(n), 1) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }
  // Returns the surviving root.
  int join(int a, int b) {
    if (size_[static_cast<std::size_t>(a)] < size_[static_cast<std::size_t>(b)]) std::swap(a, b);
    parent_[static_cast<std::size_t>(b)] = a;
    size_[static_cast<std::size_t>(a)] += size_[static_cast<std::size_t>(b)];
    return a;
  }
  int size(int root) const { return size_[static_cast<std::size_t>(root)]; }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
};

struct Edge {
  double w;
  int a, b;
};

std::vector<float> smooth(const Raster& image, double sigma) {
  const int w = image.width, h = image.height;
  std::vector<float> out(image.rgb.begin(), image.rgb.end());
  if (sigma <= 0) return out;
  const int radius = static_cast<int>(std::ceil(4 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= norm;

  std::vector<float> tmp(out.size());
  auto idx = [w](int x, int y, int c) { return (static_cast<std::size_t>(y) * w + x) * 3 + c; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * out[idx(std::clamp(x + i, 0, w - 1), y, c)];
        }
        tmp[idx(x, y, c)] = static_cast<float>(acc);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[idx(x, std::clamp(y + i, 0, h - 1), c)];
        }
        out[idx(x, y, c)] = static_cast<float>(acc);
      }
  return out;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Segmentation graph_segment(const Raster& image, double k, int min_size, double sigma) {
  if (image.empty() || image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw std::invalid_argument("graph_segment: empty or malformed image");
  }
  if (!(k > 0)) throw std::invalid_argument("graph_segment: k must be positive");
  const int w = image.width, h = image.height, n = w * h;
  const std::vector<float> px = smooth(image, sigma);
  auto dist = [&](int p, int q) {
    double s = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = px[static_cast<std::size_t>(p) * 3 + c] - px[static_cast<std::size_t>(q) * 3 + c];
      s += d * d;
    }
    return std::sqrt(s);
  };

  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(2 * n));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w) edges.push_back({dist(p, p + 1), p, p + 1});
      if (y + 1 < h) edges.push_back({dist(p, p + w), p, p + w});
    }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w < b.w; });

  DisjointSet set(n);
  std::vector<double> threshold(static_cast<std::size_t>(n), k);
  for (const auto& e : edges) {
    const int a = set.find(e.a), b = set.find(e.b);
    if (a == b) continue;
    if (e.w <= threshold[static_cast<std::size_t>(a)] && e.w <= threshold[static_cast<std::size_t>(b)]) {
      const int r = set.join(a, b);
      threshold[static_cast<std::size_t>(r)] = e.w + k / set.size(r);
    }
  }
  for (const auto& e : edges) {
    const int a = set.find(e.a), b = set.find(e.b);
    if (a != b && (set.size(a) < min_size || set.size(b) < min_size)) set.join(a, b);
  }

  Segmentation seg;
  seg.width = w;
  seg.height = h;
  seg.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  for (int p = 0; p < n; ++p) {
    auto& id = remap[static_cast<std::size_t>(set.find(p))];
    if (id < 0) id = seg.region_count++;
    seg.labels[static_cast<std::size_t>(p)] = id;
  }
  return seg;
}

std::vector<Region> describe_regions(const Segmentation& seg, const Raster& image) {
  if (seg.width != image.width || seg.height != image.height) {
    throw std::invalid_argument("describe_regions: segmentation and image sizes differ");
  }
  std::vector<Region> regions(static_cast<std::size_t>(seg.region_count));
  std::vector<bool> seen(regions.size(), false);
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      const int id = seg.labels[static_cast<std::size_t>(y) * seg.width + x];
      if (id < 0 || id >= seg.region_count) throw std::invalid_argument("describe_regions: bad label");
      Region& r = regions[static_cast<std::size_t>(id)];
      if (!seen[static_cast<std::size_t>(id)]) {
        seen[static_cast<std::size_t>(id)] = true;
        r.x1 = r.x2 = x;
        r.y1 = r.y2 = y;
      }
      r.x1 = std::min(r.x1, x);
      r.x2 = std::max(r.x2, x);
      r.y1 = std::min(r.y1, y);
      r.y2 = std::max(r.y2, y);
      ++r.size;
      for (int c = 0; c < 3; ++c) {
        const int bin = image.at(x, y, c) * kHistogramBins / 256;
        r.histogram[static_cast<std::size_t>(c * kHistogramBins + bin)] += 1.0;
      }
    }
  for (auto& r : regions) {
    if (r.size == 0) throw std::invalid_argument("describe_regions: empty region id");
    for (double& v : r.histogram) v /= r.size;
  }
  return regions;
}

Region merge_regions(const Region& a, const Region& b) {
  Region m;
  m.size = a.size + b.size;
  m.x1 = std::min(a.x1, b.x1);
  m.y1 = std::min(a.y1, b.y1);
  m.x2 = std::max(a.x2, b.x2);
  m.y2 = std::max(a.y2, b.y2);
  for (std::size_t i = 0; i < m.histogram.size(); ++i) {
    m.histogram[i] = (a.size * a.histogram[i] + b.size * b.histogram[i]) / m.size;
  }
  return m;
}

SimilarityTerms similarity_terms(const Region& a, const Region& b, int image_size) {
  double inter = 0;
  for (std::size_t i = 0; i < a.histogram.size(); ++i) inter += std::min(a.histogram[i], b.histogram[i]);
  const double total = image_size;
  const int bw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1) + 1;
  const int bh = std::max(a.y2, b.y2) - std::min(a.y1, b.y1) + 1;
  return {clamp01(inter / 3.0), clamp01(1.0 - (a.size + b.size) / total),
          clamp01(1.0 - (static_cast<double>(bw) * bh - a.size - b.size) / total)};
}

double region_similarity(const Region& a, const Region& b, int image_size) {
  const auto t = similarity_terms(a, b, image_size);
  return (t.color + t.size + t.fill) / 3.0;
}

MergeTrace merge_hierarchy(const Segmentation& seg, const Raster& image) {
  MergeTrace trace;
  trace.regions = describe_regions(seg, image);
  const int image_size = seg.width * seg.height;
  std::vector<std::set<int>> neighbours(trace.regions.size());
  auto link = [&](int a, int b) {
    if (a == b) return;
    neighbours[static_cast<std::size_t>(a)].insert(b);
    neighbours[static_cast<std::size_t>(b)].insert(a);
  };
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      const int p = seg.labels[static_cast<std::size_t>(y) * seg.width + x];
      if (x + 1 < seg.width) link(p, seg.labels[static_cast<std::size_t>(y) * seg.width + x + 1]);
      if (y + 1 < seg.height) link(p, seg.labels[static_cast<std::size_t>(y + 1) * seg.width + x]);
    }

  std::map<std::pair<int, int>, double> sims;
  for (std::size_t a = 0; a < neighbours.size(); ++a)
    for (int b : neighbours[a])
      if (static_cast<int>(a) < b) {
        sims[{static_cast<int>(a), b}] =
            region_similarity(trace.regions[a], trace.regions[static_cast<std::size_t>(b)], image_size);
      }

  while (!sims.empty()) {
    auto best = sims.begin();
    for (auto it = sims.begin(); it != sims.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;
    const int merged = static_cast<int>(trace.regions.size());
    trace.regions.push_back(merge_regions(trace.regions[static_cast<std::size_t>(a)],
                                          trace.regions[static_cast<std::size_t>(b)]));
    trace.merges.emplace_back(a, b);
    neighbours.emplace_back();

    std::set<int> around;
    for (int parent : {a, b})
      for (int nb : neighbours[static_cast<std::size_t>(parent)])
        if (nb != a && nb != b) around.insert(nb);
    for (auto it = sims.begin(); it != sims.end();) {
      const auto [i, j] = it->first;
      it = (i == a || i == b || j == a || j == b) ? sims.erase(it) : std::next(it);
    }
    for (int nb : around) {
      neighbours[static_cast<std::size_t>(nb)].erase(a);
      neighbours[static_cast<std::size_t>(nb)].erase(b);
      link(nb, merged);
      sims[{nb, merged}] = region_similarity(trace.regions[static_cast<std::size_t>(nb)],
                                             trace.regions.back(), image_size);
    }
    neighbours[static_cast<std::size_t>(a)].clear();
    neighbours[static_cast<std::size_t>(b)].clear();
  }
  return trace;
}

std::vector<BoxCXCYWH> hierarchical_merge(const Segmentation& seg, const Raster& image,
                                          std::uint64_t seed) {
  const MergeTrace trace = merge_hierarchy(seg, image);
  const std::size_t total = trace.regions.size();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Ranked {
    double priority;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    // The last region created sits at the top of the hierarchy (position 1).
    ranked.push_back({static_cast<double>(total - i) * unit(rng), i});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& x, const Ranked& y) { return x.priority < y.priority; });

  std::vector<BoxCXCYWH> out;
  std::set<std::array<int, 4>> seen;
  const double w = seg.width, h = seg.height;
  for (const auto& r : ranked) {
    const Region& reg = trace.regions[r.index];
    if (!seen.insert({reg.x1, reg.y1, reg.x2, reg.y2}).second) continue;
    out.push_back(xyxy_to_cxcywh({reg.x1 / w, reg.y1 / h, (reg.x2 + 1) / w, (reg.y2 + 1) / h}));
  }
  return out;
}

std::vector<BoxCXCYWH> selective_search(const Raster& image, const SelectiveSearchConfig& config) {
  const Segmentation seg = graph_segment(image, config.k, config.min_size, config.sigma);
  return hierarchical_merge(seg, image, config.seed);
}

}  // namespace owdetr
