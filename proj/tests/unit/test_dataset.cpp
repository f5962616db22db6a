#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include <json.hpp>

#include "owdetr/dataset.hpp"

using namespace owdetr;
namespace fs = std::filesystem;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.train_per_task = 20;
  c.eval_images = 10;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("owdetr_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Synthetic, DeterministicForSeed) {
  const auto a = generate_synthetic(small_config());
  const auto b = generate_synthetic(small_config());
  ASSERT_EQ(a.images.size(), b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    EXPECT_EQ(a.images[i].raster, b.images[i].raster);
    EXPECT_EQ(a.images[i].annotations, b.images[i].annotations);
  }
  const auto da = scratch_dir("det_a"), db = scratch_dir("det_b");
  save_dataset(a, da);
  save_dataset(b, db);
  EXPECT_EQ(slurp(da / "manifest.json"), slurp(db / "manifest.json"));
  EXPECT_EQ(slurp(da / "images.owr"), slurp(db / "images.owr"));
  auto other = small_config();
  other.seed = 8;
  EXPECT_NE(generate_synthetic(other).images[0].raster, a.images[0].raster);
  fs::remove_all(da);
  fs::remove_all(db);
}

TEST(Synthetic, TrainingLabelsStayInTheirTask) {
  const auto d = generate_synthetic(small_config());
  const auto& s = d.manifest.schedule;
  ASSERT_EQ(s.num_tasks(), 2u);
  EXPECT_EQ(s.group(1), (std::vector<int>{1, 2, 3, 4}));
  std::set<int> eval(d.manifest.eval_ids.begin(), d.manifest.eval_ids.end());
  bool unknown_seen = false;
  for (std::size_t t = 1; t <= 2; ++t) {
    for (const auto* img : d.train(t)) {
      EXPECT_FALSE(eval.count(img->id));
      EXPECT_GE(img->annotations.size(), 1u);
      for (const auto& a : img->annotations) {
        const auto& g = s.group(t);
        EXPECT_NE(std::find(g.begin(), g.end(), a.label), g.end());
      }
      for (const auto& o : img->objects) unknown_seen |= t == 1 && o.label > 4;
    }
  }
  // later classes appear unlabelled in task-1 images
  EXPECT_TRUE(unknown_seen);
  for (const auto* img : d.eval()) EXPECT_EQ(img->annotations, img->objects);
}

TEST(Synthetic, BoxesMatchRasterizedShapes) {
  const auto d = generate_synthetic(small_config());
  for (const auto& img : d.images) {
    for (const auto& o : img.objects) {
      const BoxXYXY b = cxcywh_to_xyxy(o.box);
      const int x0 = static_cast<int>(std::lround(b.x1 * 64)), y0 = static_cast<int>(std::lround(b.y1 * 64));
      const int side = static_cast<int>(std::lround((b.x2 - b.x1) * 64));
      int xmin = 64, ymin = 64, xmax = -1, ymax = -1;
      for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x)
          if (shape_covers(shape_of_class(o.label), x0, y0, side, x, y)) {
            xmin = std::min(xmin, x), xmax = std::max(xmax, x);
            ymin = std::min(ymin, y), ymax = std::max(ymax, y);
          }
      ASSERT_GE(xmax, 0);
      const BoxXYXY extent{xmin / 64.0, ymin / 64.0, (xmax + 1) / 64.0, (ymax + 1) / 64.0};
      EXPECT_GE(iou(extent, b), 0.9) << "image " << img.id << " class " << o.label;
    }
    // objects do not overlap
    for (std::size_t i = 0; i < img.objects.size(); ++i)
      for (std::size_t j = i + 1; j < img.objects.size(); ++j)
        EXPECT_LT(iou(img.objects[i].box, img.objects[j].box), 0.1);
  }
}

TEST(Synthetic, Rejections) {
  auto c = small_config();
  c.min_objects = 0;
  EXPECT_THROW(generate_synthetic(c), std::invalid_argument);
  c = small_config();
  c.num_tasks = 1;
  EXPECT_THROW(generate_synthetic(c), std::invalid_argument);
  c = small_config();
  c.max_side = 100;
  EXPECT_THROW(generate_synthetic(c), std::invalid_argument);
  EXPECT_THROW(TaskSchedule({{1, 2}, {2, 3}}), std::invalid_argument);
}

TEST(Augment, FullCropIsIdentity) {
  const auto d = generate_synthetic(small_config());
  const auto& img = d.images[0];
  const auto v = crop_view(img, CropTransform::identity());
  EXPECT_EQ(v.image.raster, img.raster);
  ASSERT_EQ(v.image.annotations.size(), img.annotations.size());
  for (std::size_t i = 0; i < img.annotations.size(); ++i) {
    EXPECT_NEAR(v.image.annotations[i].box.cx, img.annotations[i].box.cx, 1e-12);
    EXPECT_NEAR(v.image.annotations[i].box.w, img.annotations[i].box.w, 1e-12);
  }
}

TEST(Augment, LeftHalfDropsRightObjects) {
  SceneImage img;
  img.raster = Raster(64, 64);
  img.annotations = {{1, {0.2, 0.5, 0.2, 0.2}, TargetSource::annotated, 0},
                     {2, {0.8, 0.5, 0.2, 0.2}, TargetSource::annotated, 1}};
  img.objects = img.annotations;
  const auto v = crop_view(img, {0, 0, 0.5, 1});
  ASSERT_EQ(v.image.annotations.size(), 1u);
  EXPECT_EQ(v.image.annotations[0].label, 1);
  // hand affine: x' = x / 0.5
  EXPECT_NEAR(v.image.annotations[0].box.cx, 0.4, 1e-12);
  EXPECT_NEAR(v.image.annotations[0].box.w, 0.4, 1e-12);
  EXPECT_NEAR(v.image.annotations[0].box.cy, 0.5, 1e-12);
  EXPECT_NEAR(v.image.annotations[0].box.h, 0.2, 1e-12);
}

TEST(Augment, KnownWindowHandCoordinates) {
  SceneImage img;
  img.raster = Raster(64, 64);
  img.annotations = {{1, xyxy_to_cxcywh({0.3, 0.4, 0.5, 0.6}), TargetSource::annotated, 0}};
  const auto v = crop_view(img, {0.2, 0.3, 0.6, 0.5});
  ASSERT_EQ(v.image.annotations.size(), 1u);
  const BoxXYXY b = cxcywh_to_xyxy(v.image.annotations[0].box);
  EXPECT_NEAR(b.x1, (0.3 - 0.2) / 0.6, 1e-12);
  EXPECT_NEAR(b.x2, (0.5 - 0.2) / 0.6, 1e-12);
  EXPECT_NEAR(b.y1, (0.4 - 0.3) / 0.5, 1e-12);
  EXPECT_NEAR(b.y2, (0.6 - 0.3) / 0.5, 1e-12);
  // raster is nearest-neighbour resampled from the window
  Raster src(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) src.at(x, y, 0) = static_cast<std::uint8_t>(x), src.at(x, y, 1) = static_cast<std::uint8_t>(y);
  img.raster = src;
  const auto w = crop_view(img, {0.5, 0.5, 0.5, 0.5});
  EXPECT_EQ(w.image.raster.at(0, 0, 0), 32);
  EXPECT_EQ(w.image.raster.at(63, 63, 1), 63);
  EXPECT_EQ(w.image.raster.at(10, 0, 0), 37);
}

TEST(Augment, InverseRecoversSurvivingBoxes) {
  const auto d = generate_synthetic(small_config());
  int checked = 0;
  for (const auto& img : d.images) {
    const auto v = augment_view(img, derive_seed(99, static_cast<std::uint64_t>(img.id)));
    const auto& t = v.transform;
    EXPECT_GE(t.sx, 0.6);
    EXPECT_LE(t.sx, 1.0);
    EXPECT_LE(t.x0 + t.sx, 1.0 + 1e-12);
    const auto inv = t.inverse();
    for (const auto& a : v.image.annotations) {
      const auto& orig = img.annotations[static_cast<std::size_t>(
          std::find_if(img.annotations.begin(), img.annotations.end(),
                       [&](const Target& o) { return o.pair_key == a.pair_key; }) -
          img.annotations.begin())];
      const BoxXYXY ob = cxcywh_to_xyxy(orig.box);
      if (ob.x1 < t.x0 || ob.y1 < t.y0 || ob.x2 > t.x0 + t.sx || ob.y2 > t.y0 + t.sy) continue;  // clipped
      const BoxCXCYWH back = inv.apply(a.box);
      EXPECT_NEAR(back.cx, orig.box.cx, 1e-6);
      EXPECT_NEAR(back.cy, orig.box.cy, 1e-6);
      EXPECT_NEAR(back.w, orig.box.w, 1e-6);
      EXPECT_NEAR(back.h, orig.box.h, 1e-6);
      ++checked;
    }
    // annotations of the source are untouched
    EXPECT_EQ(img.annotations, d.image(img.id).annotations);
  }
  EXPECT_GT(checked, 10);
}

TEST(Storage, DatasetRoundTrip) {
  const auto d = generate_synthetic(small_config());
  const auto dir = scratch_dir("roundtrip");
  save_dataset(d, dir);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.manifest.train_ids, d.manifest.train_ids);
  EXPECT_EQ(back.manifest.eval_ids, d.manifest.eval_ids);
  EXPECT_EQ(back.manifest.class_names, d.manifest.class_names);
  EXPECT_EQ(back.manifest.schedule.groups(), d.manifest.schedule.groups());
  ASSERT_EQ(back.images.size(), d.images.size());
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    EXPECT_EQ(back.images[i].raster, d.images[i].raster);
    EXPECT_EQ(back.images[i].annotations, d.images[i].annotations);
    EXPECT_EQ(back.images[i].objects, d.images[i].objects);
  }
  write_text(dir / "manifest.json", "{\"format\": \"other\"}");
  EXPECT_THROW(load_dataset(dir), DatasetError);
  fs::remove_all(dir);
}

TEST(Storage, RasterContainerRejectsDamage) {
  const auto dir = scratch_dir("container");
  Raster r(3, 2);
  r.at(2, 1, 2) = 77;
  write_raster_container(dir / "x.owr", {{5, &r}});
  auto back = read_raster_container(dir / "x.owr");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].first, 5);
  EXPECT_EQ(back[0].second, r);
  std::string bytes = slurp(dir / "x.owr");
  write_text(dir / "trunc.owr", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_raster_container(dir / "trunc.owr"), DatasetError);
  bytes[0] = 'X';
  write_text(dir / "magic.owr", bytes);
  EXPECT_THROW(read_raster_container(dir / "magic.owr"), DatasetError);
  EXPECT_THROW(read_raster_container(dir / "missing.owr"), DatasetError);
  fs::remove_all(dir);
}

TEST(Storage, PpmRoundTrip) {
  const auto dir = scratch_dir("ppm");
  Raster r(4, 3);
  for (std::size_t i = 0; i < r.rgb.size(); ++i) r.rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_ppm(dir / "a.ppm", r);
  EXPECT_EQ(read_ppm(dir / "a.ppm"), r);
  write_text(dir / "b.ppm", "P3\n1 1\n255\n0 0 0\n");
  EXPECT_THROW(read_ppm(dir / "b.ppm"), DatasetError);
  fs::remove_all(dir);
}

TEST(Coco, HandConversionAndWarnings) {
  const auto dir = scratch_dir("coco");
  write_text(dir / "ann.json", R"({
    "categories": [{"id": 17, "name": "cat"}, {"id": 3, "name": "dog"}],
    "images": [{"id": 1, "width": 100, "height": 200}, {"id": 2, "width": 50, "height": 50}],
    "annotations": [
      {"image_id": 1, "category_id": 17, "bbox": [10, 20, 30, 40]},
      {"image_id": 1, "category_id": 3, "bbox": [90, 0, 20, 10]},
      {"image_id": 1, "category_id": 3, "bbox": [5, 5, 0, 10]}
    ]})");
  const auto imp = load_coco_subset(dir / "ann.json");
  const auto& d = imp.data;
  EXPECT_EQ(d.manifest.class_names, (std::vector<std::string>{"dog", "cat"}));
  const auto& img = d.image(1);
  ASSERT_EQ(img.annotations.size(), 2u);
  EXPECT_EQ(img.annotations[0].label, 2);  // 17 -> 2
  EXPECT_NEAR(img.annotations[0].box.cx, 0.25, 1e-12);
  EXPECT_NEAR(img.annotations[0].box.cy, 0.2, 1e-12);
  EXPECT_NEAR(img.annotations[0].box.w, 0.3, 1e-12);
  EXPECT_NEAR(img.annotations[0].box.h, 0.2, 1e-12);
  EXPECT_NEAR(cxcywh_to_xyxy(img.annotations[1].box).x2, 1.0, 1e-12);  // clipped
  EXPECT_EQ(imp.warnings.size(), 3u);  // clipped, no area, image 2 empty
  EXPECT_EQ(d.manifest.train_ids, (std::vector<std::vector<int>>{{1}}));
  fs::remove_all(dir);
}

TEST(Coco, MalformedDocumentsRejectedWithPosition) {
  const auto dir = scratch_dir("coco_bad");
  auto message = [&](const std::string& text) {
    write_text(dir / "bad.json", text);
    try {
      load_coco_subset(dir / "bad.json");
    } catch (const DatasetError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  EXPECT_NE(message("{\"categories\": [").find("byte"), std::string::npos);
  EXPECT_NE(message(R"({"categories": [{"id": 1}], "images": []})").find("annotations"), std::string::npos);
  EXPECT_NE(message(R"({"categories": [{"id": 1}], "images": [{"id": 1, "width": 10, "height": 10}],
                        "annotations": [{"image_id": 1, "category_id": 1, "bbox": [1, 2, 3]}]})")
                .find("/annotations/0/bbox"),
            std::string::npos);
  EXPECT_NE(message(R"({"categories": [{"id": 1}], "images": [{"id": 1, "width": 10, "height": 10}],
                        "annotations": [{"image_id": 9, "category_id": 1, "bbox": [1, 2, 3, 4]}]})")
                .find("unknown image id 9"),
            std::string::npos);
  EXPECT_NE(message(R"({"categories": [{"id": 1}], "images": [{"id": 1, "width": "x", "height": 10}],
                        "annotations": []})")
                .find("/images/0/width"),
            std::string::npos);
  fs::remove_all(dir);
}

TEST(Coco, ExportImportRoundTrip) {
  auto c = small_config();
  const auto d = generate_synthetic(c);
  const auto dir = scratch_dir("coco_rt");
  export_coco(d, d.manifest.eval_ids, dir / "eval.json");
  const auto imp = load_coco_subset(dir / "eval.json");
  for (int id : d.manifest.eval_ids) {
    const auto& a = d.image(id).annotations;
    const auto& b = imp.data.image(id).annotations;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].label, b[i].label);
      EXPECT_NEAR(a[i].box.cx, b[i].box.cx, 1e-6);
      EXPECT_NEAR(a[i].box.cy, b[i].box.cy, 1e-6);
      EXPECT_NEAR(a[i].box.w, b[i].box.w, 1e-6);
      EXPECT_NEAR(a[i].box.h, b[i].box.h, 1e-6);
    }
  }
  fs::remove_all(dir);
}
