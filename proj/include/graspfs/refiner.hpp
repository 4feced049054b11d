#pragma once

// Per-detection feature refinement: a guided backward pass seeded with 1 on
// the detection's grasp logit yields R at every backbone block, and the
// refined feature is F = f * R with f the post-ReLU activation.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graspfs/detector.hpp"
#include "graspfs/scene.hpp"

namespace graspfs {

enum class FeatureSource {
  Refined,  // F = f * R
  Raw,      // f only, no backward pass (ablation arm)
};

enum class FeatureView {
  Full,      // whole map, flattened row-major
  Centered,  // map translated so the detection centre sits at the map centre
  GraspFrame,  // map resampled in the detection's frame: centred and rotated by -theta
};

std::string_view to_string(FeatureSource source);
std::string_view to_string(FeatureView view);
FeatureSource parse_feature_source(std::string_view name);
FeatureView parse_feature_view(std::string_view name);

// Post-processing applied to each layer map, in order: box sum over a
// (2r+1)^2 window per channel, the view, x -> sqrt(max(x, 0)), then scaling
// to unit L2 norm (all-zero vectors stay zero).
struct RefineOptions {
  FeatureSource source = FeatureSource::Refined;
  FeatureView view = FeatureView::Full;
  std::size_t smoothing_radius = 0;
  bool root_transform = false;
  bool unit_norm = false;
};

struct RefinedFeatureSet {
  Detection detection;
  std::vector<std::string> layer_ids;         // backbone order
  std::vector<std::vector<double>> per_layer; // flattened channels x height x width
  std::string source_scene_id;
  std::optional<ShapeKind> true_shape;
  std::optional<std::size_t> label_index;     // associated ground-truth grasp
  double association_iou = 0;                 // best IoU with any label

  const std::vector<double>& layer(std::string_view layer_id) const;
};

// Throws ConfigError for an anchor index outside the detector's anchors and
// StateError when the trace is stale.
RefinedFeatureSet refine(const DetectorNetwork& detector, const ActivationTrace& trace,
                         const Detection& detection, const RefineOptions& options = {});

// Guided pass from an arbitrary per-anchor class-logit gradient; returns F per
// traced block as maps (used by tests and diagnostics).
std::vector<Tensor> refined_maps(const DetectorNetwork& detector, const ActivationTrace& trace,
                                 const Tensor& grad_logits);

struct ExtractConfig {
  double score_threshold = 0.5;
  double nms_iou = 0.3;
  double association_iou = 0.3;
  RefineOptions refine;
};

// Detection -> label association: the label of highest AABB IoU (first on
// ties) when that IoU reaches min_iou.
struct Association {
  std::optional<std::size_t> label;
  double iou = 0;
};
Association associate(const Detection& detection, std::span<const GraspLabel> labels,
                      double min_iou);

// Detect, associate and refine every detection of every scene. Output is in
// scene order, then in NMS order within a scene.
std::vector<RefinedFeatureSet> extract_all(const DetectorNetwork& detector,
                                           std::span<const LabeledScene> scenes,
                                           const ExtractConfig& config = {});

// Detections per scene without refinement (for detection-rate metrics).
std::vector<std::vector<Detection>> detect_all(const DetectorNetwork& detector,
                                               std::span<const LabeledScene> scenes,
                                               double score_threshold, double nms_iou);

// Versioned binary cache; loading a damaged or truncated file throws
// FormatError and returns nothing.
void save_cache(const std::filesystem::path& path, std::span<const RefinedFeatureSet> features);
std::vector<RefinedFeatureSet> load_cache(const std::filesystem::path& path);

}  // namespace graspfs
