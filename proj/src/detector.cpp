#include "graspfs/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "graspfs/errors.hpp"

namespace graspfs {

AnchorSet build_anchors(std::size_t image_size, std::size_t grid, std::span<const double> scales,
                        std::span<const double> aspects) {
  if (scales.empty() || aspects.empty()) throw ConfigError("anchor scales and aspects must be non-empty");
  if (grid == 0 || image_size % grid != 0) {
    throw ConfigError("anchor grid " + std::to_string(grid) + " must divide image size " +
                      std::to_string(image_size));
  }
  for (double v : scales) {
    if (!(v > 0)) throw ConfigError("anchor scales must be positive");
  }
  for (double v : aspects) {
    if (!(v > 0)) throw ConfigError("anchor aspects must be positive");
  }
  AnchorSet set;
  set.image_size = image_size;
  set.grid = grid;
  set.per_cell = scales.size() * aspects.size();
  const double cell = static_cast<double>(image_size) / static_cast<double>(grid);
  set.boxes.reserve(grid * grid * set.per_cell);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      for (double scale : scales) {
        for (double aspect : aspects) {
          const double r = std::sqrt(aspect);
          set.boxes.push_back({(static_cast<double>(gx) + 0.5) * cell,
                               (static_cast<double>(gy) + 0.5) * cell, scale / r, scale * r});
        }
      }
    }
  }
  return set;
}

std::vector<AnchorMatch> match_anchors(const AnchorSet& anchors, std::span<const GraspRect> labels,
                                       double iou_pos, double iou_neg) {
  if (!(0.0 <= iou_neg && iou_neg <= iou_pos && iou_pos <= 1.0)) {
    throw ConfigError("anchor matching requires 0 <= iou_neg <= iou_pos <= 1");
  }
  std::vector<Box> boxes;
  for (const auto& l : labels) boxes.push_back(l.aabb());

  std::vector<AnchorMatch> matches(anchors.size());
  std::vector<double> best_iou(labels.size(), -1.0);
  std::vector<std::size_t> best_anchor(labels.size(), 0);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    double best = 0.0;
    int best_label = -1;
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      const double v = iou(anchors.boxes[a], boxes[j]);
      if (v > best) {
        best = v;
        best_label = static_cast<int>(j);
      }
      if (v > best_iou[j]) {
        best_iou[j] = v;
        best_anchor[j] = a;
      }
    }
    AnchorMatch& m = matches[a];
    m.iou = best;
    if (best_label >= 0 && best >= iou_pos) {
      m.kind = MatchKind::Positive;
      m.label = best_label;
    } else if (best < iou_neg) {
      m.kind = MatchKind::Negative;
    } else {
      m.kind = MatchKind::Ignore;
      m.label = best_label;
    }
  }
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (anchors.size() == 0) break;
    AnchorMatch& m = matches[best_anchor[j]];
    m.kind = MatchKind::Positive;
    m.label = static_cast<int>(j);
    m.iou = std::max(best_iou[j], 0.0);
  }
  return matches;
}

GraspEncoding encode_grasp(const GraspRect& t, const Box& a) {
  const double theta = normalize_grasp_angle(t.theta);
  return {(t.cx - a.cx) / a.w,          (t.cy - a.cy) / a.h,
          std::log(t.h / a.h),          std::log(t.w / a.w),
          std::sin(2 * theta),          std::cos(2 * theta)};
}

GraspRect decode_grasp(std::span<const double> e, const Box& a) {
  if (e.size() != kRegressionChannels) throw ConfigError("grasp encoding must have 6 values");
  constexpr double kMaxLog = 8.0;
  GraspRect r;
  r.cx = a.cx + e[0] * a.w;
  r.cy = a.cy + e[1] * a.h;
  r.h = a.h * std::exp(std::clamp(e[2], -kMaxLog, kMaxLog));
  r.w = a.w * std::exp(std::clamp(e[3], -kMaxLog, kMaxLog));
  r.theta = normalize_grasp_angle(0.5 * std::atan2(e[4], e[5]));
  return r;
}

namespace {

void check_head_matrix(const Tensor& t, std::size_t anchors, std::size_t channels, const char* what) {
  if (t.rank() != 2 || t.dim(0) != anchors || t.dim(1) != channels) {
    throw ConfigError(std::string(what) + " must be " + std::to_string(anchors) + "x" +
                      std::to_string(channels) + ", got " + shape_string(t.shape()));
  }
}

// -log softmax(z)[c] for two classes.
double cross_entropy(double z0, double z1, std::size_t c) {
  const double m = std::max(z0, z1);
  const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
  return lse - (c == 0 ? z0 : z1);
}

}  // namespace

LossResult detection_loss(const Tensor& logits, const Tensor& regression,
                          std::span<const AnchorMatch> matches, std::span<const GraspRect> targets,
                          const AnchorSet& anchors, const LossConfig& config) {
  const std::size_t n = anchors.size();
  check_head_matrix(logits, n, kClassChannels, "class logits");
  check_head_matrix(regression, n, kRegressionChannels, "regression");
  if (matches.size() != n) throw ConfigError("one match per anchor required");

  LossResult r;
  r.grad_logits = Tensor({n, kClassChannels});
  r.grad_regression = Tensor({n, kRegressionChannels});

  std::vector<std::size_t> negatives;
  for (std::size_t a = 0; a < n; ++a) {
    if (matches[a].kind == MatchKind::Positive) {
      if (matches[a].label < 0 || static_cast<std::size_t>(matches[a].label) >= targets.size()) {
        throw ConfigError("positive anchor " + std::to_string(a) + " has no valid target");
      }
      ++r.num_positive;
    } else if (matches[a].kind == MatchKind::Negative) {
      negatives.push_back(a);
    }
  }
  const double norm = static_cast<double>(std::max<std::size_t>(r.num_positive, 1));

  // Hard negatives: highest background loss first, ties by anchor index.
  std::vector<double> neg_loss(n, 0.0);
  for (std::size_t a : negatives) neg_loss[a] = cross_entropy(logits[a * 2], logits[a * 2 + 1], 0);
  std::stable_sort(negatives.begin(), negatives.end(),
                   [&](std::size_t x, std::size_t y) { return neg_loss[x] > neg_loss[y]; });
  const auto quota = static_cast<std::size_t>(
      std::floor(config.neg_pos_ratio * static_cast<double>(std::max<std::size_t>(r.num_positive, 1))));
  r.num_negative_mined = std::min(quota, negatives.size());

  auto add_class_term = [&](std::size_t a, std::size_t target_class) {
    const double z0 = logits[a * 2], z1 = logits[a * 2 + 1];
    r.class_loss += cross_entropy(z0, z1, target_class);
    const double p1 = 1.0 / (1.0 + std::exp(z0 - z1));
    const double p0 = 1.0 - p1;
    r.grad_logits[a * 2] += (p0 - (target_class == 0 ? 1.0 : 0.0)) / norm;
    r.grad_logits[a * 2 + 1] += (p1 - (target_class == 1 ? 1.0 : 0.0)) / norm;
  };
  for (std::size_t i = 0; i < r.num_negative_mined; ++i) add_class_term(negatives[i], 0);

  for (std::size_t a = 0; a < n; ++a) {
    if (matches[a].kind != MatchKind::Positive) continue;
    add_class_term(a, kGraspClass);
    const GraspEncoding t = encode_grasp(targets[static_cast<std::size_t>(matches[a].label)],
                                         anchors.boxes[a]);
    for (std::size_t c = 0; c < kRegressionChannels; ++c) {
      const double d = regression[a * kRegressionChannels + c] - t[c];
      const double ad = std::abs(d);
      r.regression_loss += ad < 1.0 ? 0.5 * d * d : ad - 0.5;
      const double g = ad < 1.0 ? d : (d > 0 ? 1.0 : -1.0);
      r.grad_regression[a * kRegressionChannels + c] = config.regression_weight * g / norm;
    }
  }
  r.class_loss /= norm;
  r.regression_loss /= norm;
  r.total = r.class_loss + config.regression_weight * r.regression_loss;
  return r;
}

std::vector<Detection> decode_detections(const Tensor& logits, const Tensor& regression,
                                         const AnchorSet& anchors, double score_threshold,
                                         double nms_iou) {
  if (!(score_threshold > 0 && score_threshold < 1 && nms_iou > 0 && nms_iou < 1)) {
    throw ConfigError("score_threshold and nms_iou must lie in (0, 1)");
  }
  const std::size_t n = anchors.size();
  check_head_matrix(logits, n, kClassChannels, "class logits");
  check_head_matrix(regression, n, kRegressionChannels, "regression");

  std::vector<Detection> candidates;
  for (std::size_t a = 0; a < n; ++a) {
    const double score = 1.0 / (1.0 + std::exp(logits[a * 2] - logits[a * 2 + 1]));
    if (!(score > score_threshold)) continue;
    const auto enc = regression.data().subspan(a * kRegressionChannels, kRegressionChannels);
    candidates.push_back({decode_grasp(enc, anchors.boxes[a]), score, a});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& x, const Detection& y) { return x.score > y.score; });
  std::vector<Detection> kept;
  for (const auto& c : candidates) {
    const Box box = c.box();
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.box(), box) >= nms_iou;
    });
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

namespace {

Network build_network(const DetectorArch& arch, std::size_t anchors_per_cell) {
  if (arch.stages.empty()) throw ConfigError("detector needs at least one backbone stage");
  if (arch.kernel_size % 2 == 0) throw ConfigError("detector kernel size must be odd");
  std::vector<LayerSpec> backbone;
  std::size_t channels = 1;
  const std::size_t pad = arch.kernel_size / 2;
  for (std::size_t s = 0; s < arch.stages.size(); ++s) {
    if (arch.stages[s].empty()) throw ConfigError("detector stage " + std::to_string(s + 1) + " is empty");
    for (std::size_t c = 0; c < arch.stages[s].size(); ++c) {
      const std::string id = std::to_string(s + 1) + "-" + std::to_string(c + 1);
      backbone.push_back(LayerSpec::conv(id, channels, arch.stages[s][c], arch.kernel_size, 1, pad));
      backbone.push_back(LayerSpec::relu(id + "/relu"));
      channels = arch.stages[s][c];
    }
    if (s + 1 < arch.stages.size()) {
      backbone.push_back(LayerSpec::maxpool("pool" + std::to_string(s + 1), 2, 2));
    }
  }
  std::vector<LayerSpec> heads{
      LayerSpec::conv("head/cls", channels, anchors_per_cell * kClassChannels, 1),
      LayerSpec::conv("head/reg", channels, anchors_per_cell * kRegressionChannels, 1)};
  return Network({1, arch.image_size, arch.image_size}, std::move(backbone), std::move(heads));
}

}  // namespace

DetectorNetwork::DetectorNetwork(DetectorArch arch) : arch_(std::move(arch)) {
  const std::size_t per_cell = arch_.anchor_scales.size() * arch_.anchor_aspects.size();
  if (per_cell == 0) throw ConfigError("anchor scales and aspects must be non-empty");
  network_ = build_network(arch_, per_cell);
  const Shape& last = network_.output_shape(network_.backbone().size() - 1);
  if (last[1] != last[2]) throw ConfigError("detector final map must be square");
  anchors_ = build_anchors(arch_.image_size, last[1], arch_.anchor_scales, arch_.anchor_aspects);
}

Tensor DetectorNetwork::per_anchor(const Tensor& head_map, std::size_t channels) const {
  const std::size_t g = anchors_.grid, a_count = anchors_.per_cell;
  if (head_map.rank() != 3 || head_map.dim(0) != a_count * channels || head_map.dim(1) != g ||
      head_map.dim(2) != g) {
    throw ConfigError("head map shape " + shape_string(head_map.shape()) + " does not match anchors");
  }
  Tensor out({anchors_.size(), channels});
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      for (std::size_t a = 0; a < a_count; ++a) {
        const std::size_t idx = (gy * g + gx) * a_count + a;
        for (std::size_t c = 0; c < channels; ++c) {
          out[idx * channels + c] = head_map.at(a * channels + c, gy, gx);
        }
      }
    }
  }
  return out;
}

Tensor DetectorNetwork::head_map(const Tensor& per_anchor, std::size_t channels) const {
  const std::size_t g = anchors_.grid, a_count = anchors_.per_cell;
  check_head_matrix(per_anchor, anchors_.size(), channels, "per-anchor tensor");
  Tensor out({a_count * channels, g, g});
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      for (std::size_t a = 0; a < a_count; ++a) {
        const std::size_t idx = (gy * g + gx) * a_count + a;
        for (std::size_t c = 0; c < channels; ++c) {
          out.at(a * channels + c, gy, gx) = per_anchor[idx * channels + c];
        }
      }
    }
  }
  return out;
}

DetectorOutput DetectorNetwork::forward(const Tensor& image) const {
  DetectorOutput out;
  out.trace = network_.forward(image);
  out.class_logits = per_anchor(out.trace.head_outputs[0], kClassChannels);
  out.regression = per_anchor(out.trace.head_outputs[1], kRegressionChannels);
  return out;
}

BackwardResult DetectorNetwork::backward(const ActivationTrace& trace, const Tensor& grad_logits,
                                         const Tensor& grad_regression, BackwardMode mode,
                                         bool want_param_grads) const {
  std::array<Tensor, 2> grads;
  if (!grad_logits.empty()) grads[0] = head_map(grad_logits, kClassChannels);
  if (!grad_regression.empty()) grads[1] = head_map(grad_regression, kRegressionChannels);
  return network_.backward(trace, grads, mode, want_param_grads);
}

}  // namespace graspfs
