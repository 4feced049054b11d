#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graspfs/geometry.hpp"
#include "graspfs/tensor.hpp"

namespace graspfs {

// Ring is held out of detector training and only used for novel-shape runs.
enum class ShapeKind { Cylinder = 0, LShape = 1, Star = 2, TShape = 3, Ring = 4 };

inline constexpr std::array<ShapeKind, 4> kTrainedKinds = {ShapeKind::Cylinder, ShapeKind::LShape,
                                                           ShapeKind::Star, ShapeKind::TShape};
inline constexpr std::array<ShapeKind, 5> kAllKinds = {ShapeKind::Cylinder, ShapeKind::LShape,
                                                       ShapeKind::Star, ShapeKind::TShape,
                                                       ShapeKind::Ring};

std::string_view to_string(ShapeKind kind);
// Accepts "cylinder", "lshape"/"l-shape", "star", "tshape"/"t-shape", "ring".
ShapeKind parse_shape_kind(std::string_view name);
std::vector<ShapeKind> parse_shape_kinds(std::string_view comma_list);

struct ObjectPose {
  ShapeKind kind = ShapeKind::Cylinder;
  double cx = 0, cy = 0;  // pixels
  double rotation = 0;    // radians, [0, 2pi)
  double scale = 8;       // pixels per shape unit

  friend bool operator==(const ObjectPose&, const ObjectPose&) = default;
};

struct GraspLabel {
  GraspRect rect;
  std::size_t object_index = 0;
  ShapeKind shape = ShapeKind::Cylinder;

  friend bool operator==(const GraspLabel&, const GraspLabel&) = default;
};

struct LabeledScene {
  std::string id;
  std::uint64_t seed = 0;
  Tensor image;  // 1 x S x S, values in [0, 1]
  std::vector<ObjectPose> poses;
  std::vector<GraspLabel> grasps;
};

// Point-in-silhouette test in image coordinates.
bool silhouette_contains(const ObjectPose& pose, double x, double y);
// Tight axis-aligned bounds of the transformed silhouette.
Box silhouette_bounds(const ObjectPose& pose);

struct RenderOptions {
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

// Rasterises silhouettes by pixel-centre sampling: inside = 1, outside = 0.
// Additive Gaussian noise is clamped to [0, 1] and rounded to float precision
// so images survive the 32-bit on-disk format unchanged.
Tensor render_scene(std::span<const ObjectPose> poses, std::size_t image_size,
                    const RenderOptions& options = {});

// Template grasps of the pose's shape, moved into image coordinates.
std::vector<GraspLabel> grasp_labels_for(const ObjectPose& pose, std::size_t object_index = 0);

enum class KindSchedule {
  Random,  // scene kind drawn uniformly per scene
  Cyclic,  // scene i uses allowed_kinds[(first_index + i) % K]
};

struct DatasetConfig {
  std::size_t num_scenes = 1;
  std::size_t objects_per_scene = 1;
  std::vector<ShapeKind> allowed_kinds{kTrainedKinds.begin(), kTrainedKinds.end()};
  // Placed first in every scene; remaining slots come from allowed_kinds.
  std::vector<ShapeKind> required_kinds;
  // false: every object in a scene shares one kind. true: kinds are dealt
  // from a per-scene shuffle of allowed_kinds, so no kind repeats until all
  // have been used.
  bool mixed = false;
  KindSchedule schedule = KindSchedule::Random;
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  double min_scale = 7.5;
  double max_scale = 9.5;
  double noise_sigma = 0.0;
  std::size_t max_attempts = 1000;
  std::string id_prefix = "scene";
  // Index of the first generated scene; scene i is seeded from (seed, first_index + i),
  // so a dataset is a prefix of any larger one with the same seed.
  std::size_t first_index = 0;
};

std::vector<LabeledScene> sample_dataset(const DatasetConfig& config);

// Directory container: manifest.jsonl (header + one record per scene) and
// <scene id>.f32 little-endian float32 images.
void save_dataset(const std::filesystem::path& dir, std::span<const LabeledScene> scenes);
std::vector<LabeledScene> load_dataset(const std::filesystem::path& dir);

}  // namespace graspfs
