#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "graspfs/errors.hpp"
#include "graspfs/rng.hpp"
#include "graspfs/scene.hpp"

using namespace graspfs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("graspfs_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Render, EmptySceneIsBlack) {
  const Tensor img = render_scene({}, 32);
  EXPECT_EQ(img.shape(), (Shape{1, 32, 32}));
  EXPECT_EQ(img.abs_sum(), 0.0);
}

TEST(Render, DiskAreaMatchesAnalyticArea) {
  const ObjectPose pose{ShapeKind::Cylinder, 32, 32, 0.0, 20.0};
  const Tensor img = render_scene(std::span(&pose, 1), 64);
  const Box b = silhouette_bounds(pose);
  const double r = b.w / 2;
  EXPECT_NEAR(img.sum(), std::numbers::pi * r * r, 0.05 * std::numbers::pi * r * r);
}

TEST(Render, DeterministicWithNoise) {
  const ObjectPose pose{ShapeKind::TShape, 30, 34, 0.7, 8.5};
  const RenderOptions opt{0.05, 99};
  EXPECT_EQ(render_scene(std::span(&pose, 1), 64, opt), render_scene(std::span(&pose, 1), 64, opt));
}

TEST(GraspLabels, CylinderGraspAtCentreForAnyRotation) {
  for (double phi : {0.0, 0.9, 2.5, 5.0}) {
    const auto labels = grasp_labels_for({ShapeKind::Cylinder, 20, 40, phi, 8});
    ASSERT_FALSE(labels.empty());
    for (const auto& g : labels) {
      EXPECT_NEAR(g.rect.cx, 20, 1e-9);
      EXPECT_NEAR(g.rect.cy, 40, 1e-9);
    }
  }
}

TEST(GraspLabels, RotationShiftsAngles) {
  const auto a = grasp_labels_for({ShapeKind::TShape, 32, 32, 0.0, 8});
  const auto b = grasp_labels_for({ShapeKind::TShape, 32, 32, std::numbers::pi / 4, 8});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(b[i].rect.theta, normalize_grasp_angle(a[i].rect.theta + std::numbers::pi / 4), 1e-12);
    EXPECT_EQ(b[i].shape, ShapeKind::TShape);
  }
}

TEST(GraspLabels, CentresInsideDilatedSilhouetteBounds) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const ShapeKind kind = kAllKinds[rng.below(kAllKinds.size())];
    const ObjectPose pose{kind, rng.uniform(20, 44), rng.uniform(20, 44), rng.uniform(0, 2 * std::numbers::pi),
                          rng.uniform(7.5, 9.5)};
    const Tensor img = render_scene(std::span(&pose, 1), 64);
    // bounding box of the rasterised pixels
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x)
        if (img.at(0, y, x) > 0) {
          x0 = std::min(x0, double(x)); x1 = std::max(x1, x + 1.0);
          y0 = std::min(y0, double(y)); y1 = std::max(y1, y + 1.0);
        }
    for (const auto& g : grasp_labels_for(pose)) {
      EXPECT_GE(g.rect.cx, x0 - 2);
      EXPECT_LE(g.rect.cx, x1 + 2);
      EXPECT_GE(g.rect.cy, y0 - 2);
      EXPECT_LE(g.rect.cy, y1 + 2);
    }
  }
}

TEST(GraspLabels, SymmetricShapesGetCanonicalLabels) {
  // a star rotated by a full period renders identically and must be labelled identically
  const double period = 2 * std::numbers::pi / 5;
  const auto a = grasp_labels_for({ShapeKind::Star, 32, 32, 0.3, 8});
  const auto b = grasp_labels_for({ShapeKind::Star, 32, 32, 0.3 + period, 8});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].rect.cx, b[i].rect.cx, 1e-9);
    EXPECT_NEAR(a[i].rect.theta, b[i].rect.theta, 1e-9);
  }
}

TEST(Dataset, SingleSceneExample) {
  DatasetConfig c;
  c.num_scenes = 1;
  c.allowed_kinds = {ShapeKind::Cylinder};
  c.seed = 7;
  const auto scenes = sample_dataset(c);
  ASSERT_EQ(scenes.size(), 1u);
  ASSERT_EQ(scenes[0].poses.size(), 1u);
  EXPECT_EQ(scenes[0].poses[0].kind, ShapeKind::Cylinder);
  EXPECT_FALSE(scenes[0].grasps.empty());
}

TEST(Dataset, MixedFourObjectScenesHaveOneOfEach) {
  DatasetConfig c;
  c.num_scenes = 50;
  c.objects_per_scene = 4;
  c.mixed = true;
  c.seed = 3;
  for (const auto& s : sample_dataset(c)) {
    std::vector<int> count(5, 0);
    for (const auto& p : s.poses) ++count[static_cast<int>(p.kind)];
    for (ShapeKind k : kTrainedKinds) EXPECT_EQ(count[static_cast<int>(k)], 1) << s.id;
    for (std::size_t i = 0; i < s.poses.size(); ++i)
      for (std::size_t j = i + 1; j < s.poses.size(); ++j)
        EXPECT_FALSE(overlaps(silhouette_bounds(s.poses[i]), silhouette_bounds(s.poses[j]))) << s.id;
  }
}

TEST(Dataset, RequiredKindsAppearInEveryScene) {
  DatasetConfig c;
  c.num_scenes = 20;
  c.objects_per_scene = 3;
  c.mixed = true;
  c.required_kinds = {ShapeKind::Ring};
  c.seed = 4;
  for (const auto& s : sample_dataset(c)) {
    EXPECT_EQ(s.poses[0].kind, ShapeKind::Ring);
    EXPECT_EQ(s.poses.size(), 3u);
  }
}

TEST(Dataset, DeterministicAndPrefixStable) {
  DatasetConfig c;
  c.num_scenes = 12;
  c.objects_per_scene = 2;
  c.schedule = KindSchedule::Cyclic;
  c.seed = 21;
  const auto a = sample_dataset(c);
  const auto b = sample_dataset(c);
  c.num_scenes = 5;
  const auto prefix = sample_dataset(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].poses, b[i].poses);
    EXPECT_EQ(a[i].grasps, b[i].grasps);
    if (i < prefix.size()) EXPECT_EQ(a[i].poses, prefix[i].poses);
  }
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].poses[0].kind, kTrainedKinds[i % 4]);
}

TEST(Dataset, ImpossiblePlacementFails) {
  DatasetConfig c;
  c.num_scenes = 1;
  c.objects_per_scene = 30;
  c.max_attempts = 50;
  EXPECT_THROW(sample_dataset(c), ConfigError);
}

TEST(DatasetIo, RoundTrip) {
  DatasetConfig c;
  c.num_scenes = 6;
  c.objects_per_scene = 2;
  c.noise_sigma = 0.05;
  c.seed = 9;
  const auto scenes = sample_dataset(c);
  const fs::path dir = temp_dir("dataset_rt");
  save_dataset(dir, scenes);
  const auto loaded = load_dataset(dir);
  ASSERT_EQ(loaded.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    EXPECT_EQ(loaded[i].id, scenes[i].id);
    EXPECT_EQ(loaded[i].image, scenes[i].image);
    EXPECT_EQ(loaded[i].poses, scenes[i].poses);
    EXPECT_EQ(loaded[i].grasps, scenes[i].grasps);
  }
  fs::remove_all(dir);
}

TEST(DatasetIo, TruncatedImageIsAnError) {
  DatasetConfig c;
  c.num_scenes = 2;
  const auto scenes = sample_dataset(c);
  const fs::path dir = temp_dir("dataset_trunc");
  save_dataset(dir, scenes);
  const fs::path img = dir / (scenes[1].id + ".f32");
  fs::resize_file(img, fs::file_size(img) - 3);
  EXPECT_THROW(load_dataset(dir), FormatError);
  fs::remove_all(dir);
}

TEST(ShapeNames, ParseRoundTrip) {
  for (ShapeKind k : kAllKinds) EXPECT_EQ(parse_shape_kind(to_string(k)), k);
  EXPECT_THROW(parse_shape_kind("hexagon"), ConfigError);
}
