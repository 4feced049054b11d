#pragma once

// Miniature anchor-based grasp detector: a conv/ReLU/max-pool backbone whose
// last map feeds a 1x1 class head (background, grasp) and a 1x1 regression
// head (dx, dy, log h, log w, sin 2theta, cos 2theta) for every anchor.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "graspfs/geometry.hpp"
#include "graspfs/network.hpp"

namespace graspfs {

inline constexpr std::size_t kClassChannels = 2;       // background, grasp
inline constexpr std::size_t kRegressionChannels = 6;  // dx dy dh dw sin2t cos2t
inline constexpr std::size_t kGraspClass = 1;

struct AnchorSet {
  std::vector<Box> boxes;
  std::size_t image_size = 0;
  std::size_t grid = 0;
  std::size_t per_cell = 0;

  std::size_t size() const { return boxes.size(); }
};

// Anchor (gy, gx, scale s, aspect a) has index ((gy * grid + gx) * S + s) * A + a.
// aspect is width / height; an anchor's area is scale^2.
AnchorSet build_anchors(std::size_t image_size, std::size_t grid, std::span<const double> scales,
                        std::span<const double> aspects);

enum class MatchKind { Negative, Ignore, Positive };

struct AnchorMatch {
  MatchKind kind = MatchKind::Negative;
  int label = -1;  // index into the label list for positives
  double iou = 0.0;
};

// SSD-style assignment on axis-aligned IoU (label boxes use their AABB).
// Each label's best anchor is forced positive; a later label wins a shared
// best anchor.
std::vector<AnchorMatch> match_anchors(const AnchorSet& anchors, std::span<const GraspRect> labels,
                                       double iou_pos, double iou_neg);

using GraspEncoding = std::array<double, kRegressionChannels>;
GraspEncoding encode_grasp(const GraspRect& target, const Box& anchor);
GraspRect decode_grasp(std::span<const double> encoded, const Box& anchor);

struct LossConfig {
  double neg_pos_ratio = 3.0;
  double regression_weight = 1.0;
};

struct LossResult {
  double class_loss = 0;
  double regression_loss = 0;
  double total = 0;
  Tensor grad_logits;      // anchors x 2
  Tensor grad_regression;  // anchors x 6
  std::size_t num_positive = 0;
  std::size_t num_negative_mined = 0;
};

// Softmax cross-entropy over positives plus the hardest negatives (ratio
// neg_pos_ratio : max(1, positives)), smooth-L1 on positive encodings; both
// terms are normalised by max(1, positives). Targets carry no shape field.
LossResult detection_loss(const Tensor& logits, const Tensor& regression,
                          std::span<const AnchorMatch> matches, std::span<const GraspRect> targets,
                          const AnchorSet& anchors, const LossConfig& config = {});

struct Detection {
  GraspRect grasp;
  double score = 0;  // softmax probability of the grasp class
  std::size_t anchor_index = 0;

  Box box() const { return grasp.aabb(); }
};

// Scores above score_threshold are decoded and reduced by greedy NMS on
// axis-aligned IoU: a candidate is dropped when its IoU with a kept
// detection is >= nms_iou.
std::vector<Detection> decode_detections(const Tensor& logits, const Tensor& regression,
                                         const AnchorSet& anchors, double score_threshold,
                                         double nms_iou);

struct DetectorArch {
  std::size_t image_size = 64;
  // Conv widths per stage; a 2x2 max-pool separates consecutive stages.
  // Layer ids are "<stage>-<conv>", both 1-based.
  std::vector<std::vector<std::size_t>> stages{{4, 4}, {8, 8}, {16, 16}};
  std::size_t kernel_size = 3;
  std::vector<double> anchor_scales{10.0, 14.0};
  std::vector<double> anchor_aspects{0.5, 1.0, 2.0};

  friend bool operator==(const DetectorArch&, const DetectorArch&) = default;
};

struct DetectorOutput {
  Tensor class_logits;  // anchors x 2
  Tensor regression;    // anchors x 6
  ActivationTrace trace;
};

class DetectorNetwork {
 public:
  explicit DetectorNetwork(DetectorArch arch = {});

  const DetectorArch& arch() const { return arch_; }
  const Network& network() const { return network_; }
  Network& mutable_network() { return network_; }
  const AnchorSet& anchors() const { return anchors_; }
  std::size_t anchors_per_cell() const { return anchors_.per_cell; }
  std::vector<std::string> backbone_layer_ids() const { return network_.traced_layer_ids(); }

  DetectorOutput forward(const Tensor& image) const;

  // Backward from per-anchor gradients (either may be empty = zero).
  BackwardResult backward(const ActivationTrace& trace, const Tensor& grad_logits,
                          const Tensor& grad_regression, BackwardMode mode,
                          bool want_param_grads) const;

  // Head map (A*channels x G x G) <-> per-anchor matrix (anchors x channels).
  Tensor per_anchor(const Tensor& head_map, std::size_t channels) const;
  Tensor head_map(const Tensor& per_anchor, std::size_t channels) const;

 private:
  DetectorArch arch_;
  Network network_;
  AnchorSet anchors_;
};

void save_checkpoint(const std::filesystem::path& path, const DetectorNetwork& detector);
DetectorNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace graspfs
