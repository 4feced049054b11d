#include "graspfs/refiner.hpp"

#include <algorithm>
#include <cmath>

#include "graspfs/errors.hpp"
#include "graspfs/parallel.hpp"

namespace graspfs {

std::string_view to_string(FeatureSource source) {
  return source == FeatureSource::Refined ? "refined" : "raw";
}

std::string_view to_string(FeatureView view) {
  switch (view) {
    case FeatureView::Full: return "full";
    case FeatureView::Centered: return "centered";
    case FeatureView::GraspFrame: return "grasp_frame";
  }
  return "?";
}

FeatureSource parse_feature_source(std::string_view name) {
  if (name == "refined") return FeatureSource::Refined;
  if (name == "raw") return FeatureSource::Raw;
  throw ConfigError("unknown feature source '" + std::string(name) + "' (refined, raw)");
}

FeatureView parse_feature_view(std::string_view name) {
  if (name == "full") return FeatureView::Full;
  if (name == "centered") return FeatureView::Centered;
  if (name == "grasp_frame") return FeatureView::GraspFrame;
  throw ConfigError("unknown feature view '" + std::string(name) + "' (full, centered, grasp_frame)");
}

const std::vector<double>& RefinedFeatureSet::layer(std::string_view layer_id) const {
  for (std::size_t i = 0; i < layer_ids.size(); ++i) {
    if (layer_ids[i] == layer_id) return per_layer[i];
  }
  throw ConfigError("feature set has no layer '" + std::string(layer_id) + "'");
}

namespace {

Tensor box_sum(const Tensor& map, std::size_t radius) {
  const long r = static_cast<long>(radius);
  const long h = static_cast<long>(map.dim(1)), w = static_cast<long>(map.dim(2));
  Tensor out(map.shape());
  for (std::size_t c = 0; c < map.dim(0); ++c) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double t = 0;
        for (long yy = std::max(0L, y - r); yy <= std::min(h - 1, y + r); ++yy) {
          for (long xx = std::max(0L, x - r); xx <= std::min(w - 1, x + r); ++xx) {
            t += map.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          }
        }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = t;
      }
    }
  }
  return out;
}

std::vector<double> flatten(const Tensor& map, const Detection& det, const ReceptiveField& rf,
                            FeatureView view) {
  if (view == FeatureView::Full) return map.values();
  const std::size_t c_count = map.dim(0), h = map.dim(1), w = map.dim(2);
  const double jump = static_cast<double>(rf.jump);
  if (view == FeatureView::GraspFrame) {
    // Bilinear resampling; output x runs along the jaw closing direction.
    const double ux = (det.grasp.cx - rf.start) / jump, uy = (det.grasp.cy - rf.start) / jump;
    const double c = std::cos(det.grasp.theta), s = std::sin(det.grasp.theta);
    std::vector<double> out(map.size(), 0.0);
    auto sample = [&](std::size_t ch, long y, long x) {
      if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
      return map.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double ox = static_cast<double>(x) - (w - 1) / 2.0;
        const double oy = static_cast<double>(y) - (h - 1) / 2.0;
        const double sx = ux + c * ox - s * oy, sy = uy + s * ox + c * oy;
        const double fx = std::floor(sx), fy = std::floor(sy);
        const double ax = sx - fx, ay = sy - fy;
        const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
        for (std::size_t ch = 0; ch < c_count; ++ch) {
          out[(ch * h + y) * w + x] = (1 - ay) * ((1 - ax) * sample(ch, y0, x0) + ax * sample(ch, y0, x0 + 1)) +
                                      ay * ((1 - ax) * sample(ch, y0 + 1, x0) + ax * sample(ch, y0 + 1, x0 + 1));
        }
      }
    }
    return out;
  }
  const auto sx = static_cast<long>(std::lround((det.grasp.cx - rf.start) / jump - (w - 1) / 2.0));
  const auto sy = static_cast<long>(std::lround((det.grasp.cy - rf.start) / jump - (h - 1) / 2.0));
  std::vector<double> out(map.size(), 0.0);
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const long iy = static_cast<long>(y) + sy;
      if (iy < 0 || iy >= static_cast<long>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const long ix = static_cast<long>(x) + sx;
        if (ix < 0 || ix >= static_cast<long>(w)) continue;
        out[(c * h + y) * w + x] = map.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
      }
    }
  }
  return out;
}

}  // namespace

std::vector<Tensor> refined_maps(const DetectorNetwork& detector, const ActivationTrace& trace,
                                 const Tensor& grad_logits) {
  const BackwardResult back =
      detector.backward(trace, grad_logits, Tensor(), BackwardMode::Guided, false);
  std::vector<Tensor> maps;
  for (std::size_t b = 0; b < trace.layer_ids.size(); ++b) {
    Tensor f = trace.activation(trace.layer_ids[b]);
    const Tensor& r = back.block_grads[b];
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= r[i];
    maps.push_back(std::move(f));
  }
  return maps;
}

RefinedFeatureSet refine(const DetectorNetwork& detector, const ActivationTrace& trace,
                         const Detection& detection, const RefineOptions& options) {
  if (detection.anchor_index >= detector.anchors().size()) {
    throw ConfigError("anchor index " + std::to_string(detection.anchor_index) + " out of range (" +
                      std::to_string(detector.anchors().size()) + " anchors)");
  }
  RefinedFeatureSet out;
  out.detection = detection;
  out.layer_ids = trace.layer_ids;

  std::vector<Tensor> maps;
  if (options.source == FeatureSource::Refined) {
    Tensor seed({detector.anchors().size(), kClassChannels});
    seed[detection.anchor_index * kClassChannels + kGraspClass] = 1.0;
    maps = refined_maps(detector, trace, seed);
  } else {
    if (trace.network_version != detector.network().version()) {
      throw StateError("activation trace predates the current network parameters");
    }
    for (const auto& id : trace.layer_ids) maps.push_back(trace.activation(id));
  }
  for (std::size_t b = 0; b < maps.size(); ++b) {
    const Tensor& map = options.smoothing_radius > 0 ? box_sum(maps[b], options.smoothing_radius) : maps[b];
    auto values = flatten(map, detection, detector.network().receptive_field(trace.layer_ids[b]),
                          options.view);
    if (options.root_transform) {
      for (double& v : values) v = std::sqrt(std::max(v, 0.0));
    }
    if (options.unit_norm) {
      double norm = 0;
      for (double v : values) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0) {
        for (double& v : values) v /= norm;
      }
    }
    out.per_layer.push_back(std::move(values));
  }
  return out;
}

Association associate(const Detection& detection, std::span<const GraspLabel> labels,
                      double min_iou) {
  Association a;
  const Box box = detection.box();
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double v = iou(box, labels[j].rect.aabb());
    if (v > a.iou) {
      a.iou = v;
      a.label = j;
    }
  }
  if (a.iou < min_iou) a.label.reset();
  return a;
}

std::vector<std::vector<Detection>> detect_all(const DetectorNetwork& detector,
                                               std::span<const LabeledScene> scenes,
                                               double score_threshold, double nms_iou) {
  std::vector<std::vector<Detection>> out(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    const DetectorOutput o = detector.forward(scenes[i].image);
    out[i] = decode_detections(o.class_logits, o.regression, detector.anchors(), score_threshold,
                               nms_iou);
  });
  return out;
}

std::vector<RefinedFeatureSet> extract_all(const DetectorNetwork& detector,
                                           std::span<const LabeledScene> scenes,
                                           const ExtractConfig& config) {
  std::vector<std::vector<RefinedFeatureSet>> per_scene(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    const LabeledScene& scene = scenes[i];
    const DetectorOutput o = detector.forward(scene.image);
    const auto dets = decode_detections(o.class_logits, o.regression, detector.anchors(),
                                        config.score_threshold, config.nms_iou);
    for (const auto& d : dets) {
      RefinedFeatureSet f = refine(detector, o.trace, d, config.refine);
      f.source_scene_id = scene.id;
      const Association a = associate(d, scene.grasps, config.association_iou);
      f.association_iou = a.iou;
      if (a.label) {
        f.label_index = a.label;
        f.true_shape = scene.grasps[*a.label].shape;
      }
      per_scene[i].push_back(std::move(f));
    }
  });
  std::vector<RefinedFeatureSet> out;
  for (auto& v : per_scene) {
    for (auto& f : v) out.push_back(std::move(f));
  }
  return out;
}

}  // namespace graspfs
