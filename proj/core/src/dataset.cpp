#include "owdetr/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace owdetr {

using nlohmann::json;

namespace {

struct Rgb {
  int r, g, b;
};

// Warm family first, then cool; one hue per class.
constexpr std::array<Rgb, 8> kPalette = {{
    {220, 40, 40},    // red
    {235, 140, 30},   // orange
    {230, 220, 40},   // yellow
    {220, 50, 200},   // magenta
    {40, 70, 220},    // blue
    {40, 200, 220},   // cyan
    {40, 190, 70},    // green
    {130, 60, 200},   // purple
}};

constexpr std::array<const char*, 4> kShapeNames = {"circle", "square", "triangle", "cross"};
constexpr std::array<const char*, 8> kColorNames = {"red",  "orange", "yellow", "magenta",
                                                    "blue", "cyan",   "green",  "purple"};

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct Placement {
  int cls, x0, y0, side;
};

bool collides(const Placement& a, const Placement& b) {
  constexpr int gap = 1;
  return a.x0 < b.x0 + b.side + gap && b.x0 < a.x0 + a.side + gap &&
         a.y0 < b.y0 + b.side + gap && b.y0 < a.y0 + a.side + gap;
}

SceneImage render_scene(int id, const std::vector<int>& classes, const SyntheticConfig& cfg,
                        Rng& rng) {
  const int s = cfg.image_size;
  std::vector<Placement> placed;
  for (int cls : classes) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Placement p{cls, 0, 0, uniform_int(rng, cfg.min_side, cfg.max_side)};
      p.x0 = uniform_int(rng, 0, s - p.side);
      p.y0 = uniform_int(rng, 0, s - p.side);
      if (std::none_of(placed.begin(), placed.end(),
                       [&](const Placement& q) { return collides(p, q); })) {
        placed.push_back(p);
        break;
      }
    }
  }

  SceneImage img;
  img.id = id;
  img.raster = Raster(s, s);
  const int base = uniform_int(rng, 90, 160);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const int v = base + uniform_int(rng, -8, 8);
      for (int c = 0; c < 3; ++c) img.raster.at(x, y, c) = clamp_byte(v);
    }

  int key = 0;
  for (const auto& p : placed) {
    const Rgb tone = kPalette[static_cast<std::size_t>((p.cls - 1) % 8)];
    const int jr = uniform_int(rng, -12, 12), jg = uniform_int(rng, -12, 12),
              jb = uniform_int(rng, -12, 12);
    const Shape2D shape = shape_of_class(p.cls);
    for (int y = p.y0; y < p.y0 + p.side; ++y)
      for (int x = p.x0; x < p.x0 + p.side; ++x) {
        if (!shape_covers(shape, p.x0, p.y0, p.side, x, y)) continue;
        const int n = uniform_int(rng, -6, 6);
        img.raster.at(x, y, 0) = clamp_byte(tone.r + jr + n);
        img.raster.at(x, y, 1) = clamp_byte(tone.g + jg + n);
        img.raster.at(x, y, 2) = clamp_byte(tone.b + jb + n);
      }
    const double inv = 1.0 / s;
    Target t;
    t.label = p.cls;
    t.box = xyxy_to_cxcywh({p.x0 * inv, p.y0 * inv, (p.x0 + p.side) * inv, (p.y0 + p.side) * inv});
    t.source = TargetSource::annotated;
    t.pair_key = key++;
    img.objects.push_back(t);
  }
  return img;
}

json target_json(const Target& t) {
  return {{"label", t.label},
          {"box", {t.box.cx, t.box.cy, t.box.w, t.box.h}},
          {"pair_key", t.pair_key}};
}

Target target_from_json(const json& j) {
  Target t;
  t.label = j.at("label").get<int>();
  const auto& b = j.at("box");
  t.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
           b.at(3).get<double>()};
  t.pair_key = j.value("pair_key", -1);
  return t;
}

// Looks up a required member, reporting its JSON pointer on failure.
const json& member(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw DatasetError("COCO document: missing '" + key + "' at " + (where.empty() ? "/" : where));
  }
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw DatasetError("COCO document: expected a number at " + where);
  return j.get<double>();
}

}  // namespace

// ---- classes -------------------------------------------------------------------

Shape2D shape_of_class(int cls) {
  if (cls < 1) throw std::invalid_argument("shape_of_class: class ids start at 1");
  return static_cast<Shape2D>((cls - 1) % 4);
}

std::string synthetic_class_name(int cls) {
  if (cls < 1) throw std::invalid_argument("synthetic_class_name: class ids start at 1");
  const auto i = static_cast<std::size_t>(cls - 1);
  std::string name = std::string(kColorNames[i % 8]) + "_" + kShapeNames[i % 4];
  if (cls > 8) name += "_" + std::to_string(cls);
  return name;
}

bool shape_covers(Shape2D shape, int x0, int y0, int side, int px, int py) {
  if (px < x0 || py < y0 || px >= x0 + side || py >= y0 + side) return false;
  const double half = 0.5 * side;
  const double dx = px + 0.5 - (x0 + half);
  const double dy = py + 0.5 - (y0 + half);
  switch (shape) {
    case Shape2D::circle:
      return dx * dx + dy * dy <= half * half;
    case Shape2D::square:
      return true;
    case Shape2D::triangle: {
      const double v = (py + 0.5 - y0) / side;  // 0 at the apex, 1 at the base
      return std::abs(dx) <= 0.5 * v * side + 0.5;
    }
    case Shape2D::cross:
      return std::abs(dx) <= side / 6.0 || std::abs(dy) <= side / 6.0;
  }
  return false;
}

// ---- dataset -------------------------------------------------------------------

const SceneImage& Dataset::image(int id) const {
  auto it = std::lower_bound(images.begin(), images.end(), id,
                             [](const SceneImage& a, int v) { return a.id < v; });
  if (it == images.end() || it->id != id) {
    throw std::out_of_range("dataset: no image with id " + std::to_string(id));
  }
  return *it;
}

std::vector<const SceneImage*> Dataset::train(std::size_t task) const {
  if (task < 1 || task > manifest.train_ids.size()) {
    throw std::out_of_range("dataset: no training split for task " + std::to_string(task));
  }
  std::vector<const SceneImage*> out;
  for (int id : manifest.train_ids[task - 1]) out.push_back(&image(id));
  return out;
}

std::vector<const SceneImage*> Dataset::eval() const {
  std::vector<const SceneImage*> out;
  for (int id : manifest.eval_ids) out.push_back(&image(id));
  return out;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) {
    throw std::invalid_argument("synthetic: need 1 <= min_objects <= max_objects");
  }
  if (cfg.min_side < 3 || cfg.max_side < cfg.min_side || cfg.max_side > cfg.image_size) {
    throw std::invalid_argument("synthetic: invalid object side range");
  }
  if (cfg.train_per_task < 0 || cfg.eval_images < 0) {
    throw std::invalid_argument("synthetic: image counts must be nonnegative");
  }
  Dataset data;
  data.manifest.schedule = TaskSchedule::even(cfg.num_classes, cfg.num_tasks);
  if (data.manifest.schedule.num_tasks() < 2) {
    throw std::invalid_argument("synthetic: at least two class groups are required");
  }
  for (int c = 1; c <= cfg.num_classes; ++c) {
    data.manifest.class_names.push_back(synthetic_class_name(c));
  }
  const auto& sched = data.manifest.schedule;

  int next_id = 0;
  auto draw_classes = [&](Rng& rng, const std::vector<int>& first_from) {
    const int n = uniform_int(rng, cfg.min_objects, cfg.max_objects);
    std::vector<int> classes;
    classes.push_back(first_from[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(first_from.size()) - 1))]);
    for (int i = 1; i < n; ++i) classes.push_back(uniform_int(rng, 1, cfg.num_classes));
    return classes;
  };

  std::vector<int> all(static_cast<std::size_t>(cfg.num_classes));
  for (int c = 1; c <= cfg.num_classes; ++c) all[static_cast<std::size_t>(c - 1)] = c;

  for (std::size_t t = 1; t <= sched.num_tasks(); ++t) {
    const auto& group = sched.group(t);
    std::vector<int> ids;
    for (int i = 0; i < cfg.train_per_task; ++i) {
      const int id = next_id++;
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(id)));
      SceneImage img = render_scene(id, draw_classes(rng, group), cfg, rng);
      for (const auto& o : img.objects) {
        if (std::find(group.begin(), group.end(), o.label) != group.end()) {
          img.annotations.push_back(o);
        }
      }
      ids.push_back(id);
      data.images.push_back(std::move(img));
    }
    data.manifest.train_ids.push_back(std::move(ids));
  }
  for (int i = 0; i < cfg.eval_images; ++i) {
    const int id = next_id++;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(id)));
    SceneImage img = render_scene(id, draw_classes(rng, all), cfg, rng);
    img.annotations = img.objects;
    data.manifest.eval_ids.push_back(id);
    data.images.push_back(std::move(img));
  }
  return data;
}

// ---- augmentation ----------------------------------------------------------------

AugmentedView crop_view(const SceneImage& image, const CropTransform& t) {
  if (!t.invertible()) throw std::invalid_argument("crop_view: transform not invertible");
  AugmentedView out;
  out.transform = t;
  out.image.id = image.id;
  const Raster& src = image.raster;
  Raster dst(src.width, src.height);
  for (int y = 0; y < dst.height; ++y) {
    const double v = t.y0 + (y + 0.5) / dst.height * t.sy;
    const int sy = std::clamp(static_cast<int>(std::floor(v * src.height)), 0, src.height - 1);
    for (int x = 0; x < dst.width; ++x) {
      const double u = t.x0 + (x + 0.5) / dst.width * t.sx;
      const int sx = std::clamp(static_cast<int>(std::floor(u * src.width)), 0, src.width - 1);
      for (int c = 0; c < 3; ++c) dst.at(x, y, c) = src.at(sx, sy, c);
    }
  }
  out.image.raster = std::move(dst);
  auto remap = [&](const std::vector<Target>& in, std::vector<Target>& result) {
    for (const auto& a : in) {
      if (auto box = transfer_box(t, a.box, kMinRetention)) {
        Target moved = a;
        moved.box = *box;
        result.push_back(moved);
      }
    }
  };
  remap(image.annotations, out.image.annotations);
  remap(image.objects, out.image.objects);
  return out;
}

AugmentedView augment_view(const SceneImage& image, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> side(0.6, 1.0);
  CropTransform t;
  t.sx = side(rng);
  t.sy = side(rng);
  t.x0 = std::uniform_real_distribution<double>(0.0, 1.0 - t.sx)(rng);
  t.y0 = std::uniform_real_distribution<double>(0.0, 1.0 - t.sy)(rng);
  return crop_view(image, t);
}

// ---- raster files ----------------------------------------------------------------

void write_raster_container(const std::filesystem::path& path,
                            const std::vector<std::pair<int, const Raster*>>& images) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot write " + path.string());
  auto put32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  os.write("OWRASTER", 8);
  put32(1);
  put32(static_cast<std::uint32_t>(images.size()));
  for (const auto& [id, r] : images) {
    put32(static_cast<std::uint32_t>(id));
    put32(static_cast<std::uint32_t>(r->width));
    put32(static_cast<std::uint32_t>(r->height));
    os.write(reinterpret_cast<const char*>(r->rgb.data()),
             static_cast<std::streamsize>(r->rgb.size()));
  }
  if (!os) throw DatasetError("write failed for " + path.string());
}

std::vector<std::pair<int, Raster>> read_raster_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open " + path.string());
  auto get32 = [&]() {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw DatasetError(path.string() + ": truncated raster container");
    return v;
  };
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "OWRASTER", 8) != 0) {
    throw DatasetError(path.string() + ": not a raster container");
  }
  if (get32() != 1) throw DatasetError(path.string() + ": unsupported container version");
  const std::uint32_t count = get32();
  std::vector<std::pair<int, Raster>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const int id = static_cast<int>(get32());
    const auto w = static_cast<int>(get32());
    const auto h = static_cast<int>(get32());
    if (w <= 0 || h <= 0 || w > 1 << 14 || h > 1 << 14) {
      throw DatasetError(path.string() + ": implausible raster size");
    }
    Raster r(w, h);
    is.read(reinterpret_cast<char*>(r.rgb.data()), static_cast<std::streamsize>(r.rgb.size()));
    if (!is) throw DatasetError(path.string() + ": truncated raster container");
    out.emplace_back(id, std::move(r));
  }
  return out;
}

Raster read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open " + path.string());
  auto token = [&]() {
    std::string tok;
    while (is >> std::ws && is.peek() == '#') {
      std::string skip;
      std::getline(is, skip);
    }
    is >> tok;
    return tok;
  };
  if (token() != "P6") throw DatasetError(path.string() + ": only binary PPM (P6) is supported");
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  const int maxval = std::stoi(token());
  if (w <= 0 || h <= 0 || maxval != 255) throw DatasetError(path.string() + ": bad PPM header");
  is.get();
  Raster r(w, h);
  is.read(reinterpret_cast<char*>(r.rgb.data()), static_cast<std::streamsize>(r.rgb.size()));
  if (!is) throw DatasetError(path.string() + ": truncated PPM");
  return r;
}

void write_ppm(const std::filesystem::path& path, const Raster& raster) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot write " + path.string());
  os << "P6\n" << raster.width << " " << raster.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(raster.rgb.data()),
           static_cast<std::streamsize>(raster.rgb.size()));
}

// ---- manifest ----------------------------------------------------------------------

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["format"] = "owdetr-manifest";
  j["version"] = 1;
  j["groups"] = data.manifest.schedule.groups();
  j["class_names"] = data.manifest.class_names;
  j["train_ids"] = data.manifest.train_ids;
  j["eval_ids"] = data.manifest.eval_ids;
  json images = json::array();
  std::vector<std::pair<int, const Raster*>> rasters;
  for (const auto& img : data.images) {
    json a = json::array(), o = json::array();
    for (const auto& t : img.annotations) a.push_back(target_json(t));
    for (const auto& t : img.objects) o.push_back(target_json(t));
    images.push_back({{"id", img.id}, {"annotations", a}, {"objects", o}});
    rasters.emplace_back(img.id, &img.raster);
  }
  j["images"] = std::move(images);
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw DatasetError("cannot write " + (dir / "manifest.json").string());
  os << j.dump(1) << "\n";
  write_raster_container(dir / "images.owr", rasters);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw DatasetError("cannot open " + (dir / "manifest.json").string());
  json j;
  try {
    j = json::parse(is);
    if (j.at("format") != "owdetr-manifest") throw DatasetError("not an owdetr manifest");
    Dataset data;
    data.manifest.schedule = TaskSchedule(j.at("groups").get<std::vector<std::vector<int>>>());
    data.manifest.class_names = j.at("class_names").get<std::vector<std::string>>();
    data.manifest.train_ids = j.at("train_ids").get<std::vector<std::vector<int>>>();
    data.manifest.eval_ids = j.at("eval_ids").get<std::vector<int>>();
    auto rasters = read_raster_container(dir / "images.owr");
    std::sort(rasters.begin(), rasters.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& ji : j.at("images")) {
      SceneImage img;
      img.id = ji.at("id").get<int>();
      for (const auto& t : ji.at("annotations")) img.annotations.push_back(target_from_json(t));
      for (const auto& t : ji.value("objects", json::array())) img.objects.push_back(target_from_json(t));
      auto it = std::lower_bound(rasters.begin(), rasters.end(), img.id,
                                 [](const auto& a, int v) { return a.first < v; });
      if (it == rasters.end() || it->first != img.id) {
        throw DatasetError("no raster stored for image " + std::to_string(img.id));
      }
      img.raster = std::move(it->second);
      data.images.push_back(std::move(img));
    }
    std::sort(data.images.begin(), data.images.end(),
              [](const SceneImage& a, const SceneImage& b) { return a.id < b.id; });
    return data;
  } catch (const json::exception& e) {
    throw DatasetError((dir / "manifest.json").string() + ": " + e.what());
  }
}

// ---- COCO --------------------------------------------------------------------------

CocoImport load_coco_subset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw DatasetError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte) +
                       ": " + e.what());
  }

  CocoImport out;
  const json& cats = member(doc, "categories", "");
  const json& imgs = member(doc, "images", "");
  const json& anns = member(doc, "annotations", "");
  if (!cats.is_array() || !imgs.is_array() || !anns.is_array()) {
    throw DatasetError(path.string() + ": categories, images and annotations must be arrays");
  }

  std::vector<std::pair<int, std::string>> categories;
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = "/categories/" + std::to_string(i);
    categories.emplace_back(static_cast<int>(number(member(cats[i], "id", where), where + "/id")),
                            cats[i].value("name", std::string("class")));
  }
  std::sort(categories.begin(), categories.end());
  if (categories.empty()) throw DatasetError(path.string() + ": no categories");
  std::vector<int> group;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (i > 0 && categories[i].first == categories[i - 1].first) {
      throw DatasetError(path.string() + ": duplicate category id " +
                         std::to_string(categories[i].first));
    }
    group.push_back(static_cast<int>(i + 1));
    out.data.manifest.class_names.push_back(categories[i].second);
  }
  out.data.manifest.schedule = TaskSchedule({group});
  auto remap = [&](int coco_id, const std::string& where) {
    auto it = std::lower_bound(categories.begin(), categories.end(), coco_id,
                               [](const auto& c, int v) { return c.first < v; });
    if (it == categories.end() || it->first != coco_id) {
      throw DatasetError(path.string() + ": unknown category " + std::to_string(coco_id) +
                         " at " + where);
    }
    return static_cast<int>(it - categories.begin()) + 1;
  };

  struct Info {
    double w, h;
  };
  std::vector<std::pair<int, Info>> sizes;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const std::string where = "/images/" + std::to_string(i);
    SceneImage img;
    img.id = static_cast<int>(number(member(imgs[i], "id", where), where + "/id"));
    const double w = number(member(imgs[i], "width", where), where + "/width");
    const double h = number(member(imgs[i], "height", where), where + "/height");
    if (w <= 0 || h <= 0) throw DatasetError(path.string() + ": non-positive size at " + where);
    if (imgs[i].contains("file_name") && imgs[i]["file_name"].is_string()) {
      const auto file = path.parent_path() / imgs[i]["file_name"].get<std::string>();
      if (std::filesystem::exists(file) && file.extension() == ".ppm") img.raster = read_ppm(file);
    }
    sizes.emplace_back(img.id, Info{w, h});
    out.data.images.push_back(std::move(img));
  }
  std::sort(out.data.images.begin(), out.data.images.end(),
            [](const SceneImage& a, const SceneImage& b) { return a.id < b.id; });
  std::sort(sizes.begin(), sizes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i].first == sizes[i - 1].first) {
      throw DatasetError(path.string() + ": duplicate image id " + std::to_string(sizes[i].first));
    }
  }

  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = "/annotations/" + std::to_string(i);
    const int image_id =
        static_cast<int>(number(member(anns[i], "image_id", where), where + "/image_id"));
    const int cat = static_cast<int>(
        number(member(anns[i], "category_id", where), where + "/category_id"));
    const json& bbox = member(anns[i], "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4) {
      throw DatasetError(path.string() + ": bbox must hold 4 numbers at " + where + "/bbox");
    }
    auto it = std::lower_bound(sizes.begin(), sizes.end(), image_id,
                               [](const auto& s, int v) { return s.first < v; });
    if (it == sizes.end() || it->first != image_id) {
      throw DatasetError(path.string() + ": unknown image id " + std::to_string(image_id) +
                         " at " + where);
    }
    const auto [iw, ih] = it->second;
    double x = number(bbox[0], where + "/bbox/0"), y = number(bbox[1], where + "/bbox/1");
    double bw = number(bbox[2], where + "/bbox/2"), bh = number(bbox[3], where + "/bbox/3");
    BoxXYXY b{x / iw, y / ih, (x + bw) / iw, (y + bh) / ih};
    const BoxXYXY clipped = clip_unit(b);
    if (!(clipped == b)) {
      out.warnings.push_back("annotation " + where + " exceeds image bounds; clipped");
    }
    if (area(clipped) <= 0) {
      out.warnings.push_back("annotation " + where + " has no area; skipped");
      continue;
    }
    Target t;
    t.label = remap(cat, where + "/category_id");
    t.box = xyxy_to_cxcywh(clipped);
    auto& img = *std::lower_bound(out.data.images.begin(), out.data.images.end(), image_id,
                                  [](const SceneImage& a, int v) { return a.id < v; });
    t.pair_key = static_cast<int>(img.annotations.size());
    img.annotations.push_back(t);
    img.objects.push_back(t);
  }

  std::vector<int> train;
  for (const auto& img : out.data.images) {
    out.data.manifest.eval_ids.push_back(img.id);
    if (img.annotations.empty()) {
      out.warnings.push_back("image " + std::to_string(img.id) +
                             " has no annotations; excluded from training");
    } else {
      train.push_back(img.id);
    }
  }
  out.data.manifest.train_ids.push_back(std::move(train));
  return out;
}

void export_coco(const Dataset& data, const std::vector<int>& ids,
                 const std::filesystem::path& path) {
  json doc;
  json cats = json::array();
  for (std::size_t c = 0; c < data.manifest.class_names.size(); ++c) {
    cats.push_back({{"id", c + 1}, {"name", data.manifest.class_names[c]}});
  }
  json imgs = json::array(), anns = json::array();
  int ann_id = 1;
  for (int id : ids) {
    const SceneImage& img = data.image(id);
    const double w = img.raster.empty() ? 1.0 : img.raster.width;
    const double h = img.raster.empty() ? 1.0 : img.raster.height;
    imgs.push_back({{"id", id}, {"width", w}, {"height", h}});
    for (const auto& t : img.annotations) {
      const BoxXYXY b = cxcywh_to_xyxy(t.box);
      anns.push_back({{"id", ann_id++},
                      {"image_id", id},
                      {"category_id", t.label},
                      {"bbox", {b.x1 * w, b.y1 * h, (b.x2 - b.x1) * w, (b.y2 - b.y1) * h}},
                      {"area", (b.x2 - b.x1) * w * (b.y2 - b.y1) * h},
                      {"iscrowd", 0}});
    }
  }
  doc["images"] = std::move(imgs);
  doc["annotations"] = std::move(anns);
  doc["categories"] = std::move(cats);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DatasetError("cannot write " + path.string());
  os << doc.dump(1) << "\n";
}

}  // namespace owdetr
