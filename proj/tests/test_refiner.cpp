#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>

#include "graspfs/binary_io.hpp"
#include "graspfs/errors.hpp"
#include "graspfs/refiner.hpp"

using namespace graspfs;
namespace fs = std::filesystem;

namespace {

// 4x4 input, one 1x1 conv (w, b) + ReLU, 1x1 heads; one anchor per cell.
DetectorNetwork hand_detector(double w, double b, double grasp_weight) {
  DetectorArch arch;
  arch.image_size = 4;
  arch.stages = {{1}};
  arch.kernel_size = 1;
  arch.anchor_scales = {2.0};
  arch.anchor_aspects = {1.0};
  DetectorNetwork det(arch);
  Network& net = det.mutable_network();
  for (std::size_t blk = 0; blk < net.num_param_blocks(); ++blk) {
    net.mutable_params(blk).weights.fill(0.0);
    net.mutable_params(blk).bias.fill(0.0);
  }
  net.mutable_params(0).weights[0] = w;
  net.mutable_params(0).bias[0] = b;
  net.mutable_params(1).weights[kGraspClass] = grasp_weight;  // head/cls channel 1
  return det;
}

Detection detection_at(const DetectorNetwork& det, std::size_t anchor) {
  Detection d;
  d.anchor_index = anchor;
  const Box& b = det.anchors().boxes[anchor];
  d.grasp = {b.cx, b.cy, b.h, b.w, 0.0};
  d.score = 0.9;
  return d;
}

}  // namespace

TEST(Refine, HandComputedSingleLayer) {
  const DetectorNetwork det = hand_detector(2.0, -1.0, 3.0);
  ASSERT_EQ(det.network().block_name(1), "head/cls");
  Tensor image({1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) image[i] = 0.1 * static_cast<double>(i);
  const auto out = det.forward(image);

  // pixel 9: f = relu(2 * 0.9 - 1) = 0.8, R = 3 passes the guided gate, F = 2.4
  const auto fs9 = refine(det, out.trace, detection_at(det, 9));
  ASSERT_EQ(fs9.per_layer.size(), 1u);
  std::vector<double> expected(16, 0.0);
  expected[9] = 0.8 * 3.0;
  ASSERT_EQ(fs9.per_layer[0].size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(fs9.per_layer[0][i], expected[i], 1e-15);

  // pixel 2: forward input 2 * 0.2 - 1 < 0, the gate closes
  const auto fs2 = refine(det, out.trace, detection_at(det, 2));
  for (double v : fs2.per_layer[0]) EXPECT_EQ(v, 0.0);

  // raw source returns the activation map itself
  const auto raw = refine(det, out.trace, detection_at(det, 9), {FeatureSource::Raw});
  EXPECT_EQ(raw.per_layer[0], out.trace.activation("1-1").values());
}

TEST(Refine, NegativeConnectionGivesZero) {
  const DetectorNetwork det = hand_detector(2.0, 0.5, -3.0);
  Tensor image({1, 4, 4}, 1.0);
  const auto out = det.forward(image);
  const auto f = refine(det, out.trace, detection_at(det, 5));
  for (double v : f.per_layer[0]) EXPECT_EQ(v, 0.0);
}

TEST(Refine, DifferentDetectionsDiffer) {
  DetectorNetwork det;
  Rng rng(3);
  det.mutable_network().init_he(rng);
  Tensor image({1, 64, 64});
  for (auto& v : image.data()) v = rng.uniform();
  const auto out = det.forward(image);
  const auto a = refine(det, out.trace, detection_at(det, 100));
  const auto b = refine(det, out.trace, detection_at(det, 1000));
  const auto a2 = refine(det, out.trace, detection_at(det, 100));
  EXPECT_NE(a.per_layer, b.per_layer);
  EXPECT_EQ(a.per_layer, a2.per_layer);
  EXPECT_EQ(a.layer_ids, (std::vector<std::string>{"1-1", "1-2", "2-1", "2-2", "3-1", "3-2"}));
}

TEST(Refine, Errors) {
  DetectorNetwork det = hand_detector(1.0, 0.0, 1.0);
  const auto out = det.forward(Tensor({1, 4, 4}, 1.0));
  EXPECT_THROW(refine(det, out.trace, detection_at(det, 0), {}).per_layer.at(0).at(99), std::out_of_range);
  Detection bad = detection_at(det, 0);
  bad.anchor_index = 16;
  EXPECT_THROW(refine(det, out.trace, bad), ConfigError);
  det.mutable_network().mutable_params(0).bias[0] = 2.0;
  EXPECT_THROW(refine(det, out.trace, detection_at(det, 0)), StateError);
  EXPECT_THROW(refine(det, out.trace, detection_at(det, 0), {FeatureSource::Raw}), StateError);
}

TEST(Refine, PostProcessingOptions) {
  const DetectorNetwork det = hand_detector(2.0, -1.0, 3.0);
  Tensor image({1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) image[i] = 0.1 * static_cast<double>(i);
  const auto out = det.forward(image);
  RefineOptions opt;
  opt.smoothing_radius = 1;
  opt.root_transform = true;
  const auto f = refine(det, out.trace, detection_at(det, 9), opt);
  // the single nonzero value 2.4 at (2, 1) spreads over its 3x3 neighbourhood
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const bool near = y >= 1 && y <= 3 && x <= 2;
      EXPECT_NEAR(f.per_layer[0][y * 4 + x], near ? std::sqrt(2.4) : 0.0, 1e-12);
    }
  // nine equal entries scale to 1/3 each
  opt.unit_norm = true;
  const auto g = refine(det, out.trace, detection_at(det, 9), opt);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(g.per_layer[0][i], f.per_layer[0][i] > 0 ? 1.0 / 3.0 : 0.0, 1e-12);
  }
  // an all-zero map stays zero
  const auto z = refine(det, out.trace, detection_at(det, 0), opt);
  for (double v : z.per_layer[0]) EXPECT_EQ(v, 0.0);
}

TEST(Refine, CenteredViewMovesDetectionToMiddle) {
  const DetectorNetwork det = hand_detector(2.0, -1.0, 3.0);
  Tensor image({1, 4, 4}, 1.0);
  const auto out = det.forward(image);
  // anchor 0 sits at (0, 0); (W - 1) / 2 = 1.5 rounds to a shift of 2
  const auto f = refine(det, out.trace, detection_at(det, 0), {FeatureSource::Refined, FeatureView::Centered});
  EXPECT_NEAR(f.per_layer[0][2 * 4 + 2], 3.0, 1e-15);
  EXPECT_NEAR(std::accumulate(f.per_layer[0].begin(), f.per_layer[0].end(), 0.0), 3.0, 1e-15);
}

TEST(Associate, BestLabelAboveThreshold) {
  Detection d;
  d.grasp = {10, 10, 4, 4, 0};
  std::vector<GraspLabel> labels(3);
  labels[0].rect = {30, 30, 4, 4, 0};
  labels[1].rect = {11, 10, 4, 4, 0};
  labels[2].rect = {10, 10, 4, 4, 0};
  labels[2].shape = ShapeKind::Star;
  const Association a = associate(d, labels, 0.3);
  ASSERT_TRUE(a.label);
  EXPECT_EQ(*a.label, 2u);
  EXPECT_DOUBLE_EQ(a.iou, 1.0);
  EXPECT_FALSE(associate(d, std::span(labels).first(1), 0.3).label);
}

TEST(Extract, SceneOrderAndShuffleInvariance) {
  DetectorNetwork det;
  Rng rng(5);
  det.mutable_network().init_he(rng);
  DatasetConfig dc;
  dc.num_scenes = 6;
  dc.objects_per_scene = 2;
  dc.seed = 8;
  auto scenes = sample_dataset(dc);
  ExtractConfig ec;
  ec.score_threshold = 0.4;
  ec.nms_iou = 0.3;
  const auto a = extract_all(det, scenes, ec);
  ASSERT_FALSE(a.empty());
  const auto dets = detect_all(det, scenes, ec.score_threshold, ec.nms_iou);
  std::size_t total = 0;
  for (const auto& d : dets) total += d.size();
  EXPECT_EQ(a.size(), total);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LE(a[i - 1].source_scene_id, a[i].source_scene_id);

  std::reverse(scenes.begin(), scenes.end());
  const auto b = extract_all(det, scenes, ec);
  auto key = [](const RefinedFeatureSet& f) { return std::pair(f.source_scene_id, f.per_layer); };
  std::vector<std::pair<std::string, std::vector<std::vector<double>>>> ka, kb;
  for (const auto& f : a) ka.push_back(key(f));
  for (const auto& f : b) kb.push_back(key(f));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  EXPECT_EQ(ka, kb);
}

TEST(FeatureCache, RoundTripAndTruncation) {
  DetectorNetwork det;
  Rng rng(6);
  det.mutable_network().init_he(rng);
  DatasetConfig dc;
  dc.num_scenes = 3;
  dc.seed = 2;
  ExtractConfig ec;
  ec.score_threshold = 0.4;
  const auto features = extract_all(det, sample_dataset(dc), ec);
  ASSERT_FALSE(features.empty());
  const fs::path path = fs::temp_directory_path() / "graspfs_test_features.gfc";
  save_cache(path, features);
  const auto back = load_cache(path);
  ASSERT_EQ(back.size(), features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    EXPECT_EQ(back[i].per_layer, features[i].per_layer);
    EXPECT_EQ(back[i].layer_ids, features[i].layer_ids);
    EXPECT_EQ(back[i].source_scene_id, features[i].source_scene_id);
    EXPECT_EQ(back[i].true_shape, features[i].true_shape);
    EXPECT_EQ(back[i].label_index, features[i].label_index);
    EXPECT_EQ(back[i].detection.grasp, features[i].detection.grasp);
    EXPECT_EQ(back[i].detection.anchor_index, features[i].detection.anchor_index);
  }
  // count is stored right after the 8-byte magic and u32 version
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, "cache");
  r.raw(12);
  EXPECT_EQ(r.u64(), features.size());

  io::write_file(path, bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_cache(path), FormatError);
  fs::remove(path);
}
