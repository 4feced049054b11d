#include "graspfs/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "graspfs/errors.hpp"
#include "graspfs/parallel.hpp"
#include "graspfs/rng.hpp"

namespace graspfs {

namespace {

constexpr double kPi = std::numbers::pi;

// Shape geometry in shape units; poses scale it to pixels. Parts that a
// gripper closes on (bars, star arms, ring band, cylinder) are all roughly
// 0.4-1.1 units across so one grasp rectangle size fits every kind.
struct Rect {
  double x0, x1, y0, y1;
  bool contains(double u, double v) const { return u >= x0 && u <= x1 && v >= y0 && v <= y1; }
};

constexpr double kCylinderRadius = 0.55;
constexpr Rect kLVertical{-0.8, -0.3, -0.9, 0.9};
constexpr Rect kLHorizontal{-0.8, 0.9, 0.4, 0.9};
constexpr Rect kTBar{-0.9, 0.9, -0.9, -0.4};
constexpr Rect kTStem{-0.25, 0.25, -0.4, 0.9};
constexpr double kStarOuter = 1.0;
constexpr double kStarInner = 0.42;
constexpr int kStarPoints = 5;
constexpr double kRingOuter = 0.9;
constexpr double kRingInner = 0.5;

// Grasp rectangle size in shape units.
constexpr double kGraspOpening = 1.3;
constexpr double kGraspJaw = 0.9;

struct Point {
  double u, v;
};

std::vector<Point> star_polygon() {
  std::vector<Point> pts;
  for (int i = 0; i < 2 * kStarPoints; ++i) {
    const double r = i % 2 == 0 ? kStarOuter : kStarInner;
    const double a = -kPi / 2 + i * kPi / kStarPoints;
    pts.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return pts;
}

const std::vector<Point>& star() {
  static const std::vector<Point> pts = star_polygon();
  return pts;
}

bool in_polygon(const std::vector<Point>& poly, double u, double v) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].v > v) != (poly[j].v > v)) {
      const double x = poly[j].u + (v - poly[j].v) * (poly[i].u - poly[j].u) / (poly[i].v - poly[j].v);
      if (u < x) inside = !inside;
    }
  }
  return inside;
}

bool local_contains(ShapeKind kind, double u, double v) {
  switch (kind) {
    case ShapeKind::Cylinder: return u * u + v * v <= kCylinderRadius * kCylinderRadius;
    case ShapeKind::LShape: return kLVertical.contains(u, v) || kLHorizontal.contains(u, v);
    case ShapeKind::TShape: return kTBar.contains(u, v) || kTStem.contains(u, v);
    case ShapeKind::Star: return in_polygon(star(), u, v);
    case ShapeKind::Ring: {
      const double r2 = u * u + v * v;
      return r2 <= kRingOuter * kRingOuter && r2 >= kRingInner * kRingInner;
    }
  }
  return false;
}

std::vector<Point> rect_corners(const Rect& r) {
  return {{r.x0, r.y0}, {r.x1, r.y0}, {r.x1, r.y1}, {r.x0, r.y1}};
}

// Outline points whose transformed extremes bound the silhouette; empty for
// round shapes, which use their radius.
std::vector<Point> outline(ShapeKind kind) {
  std::vector<Point> pts;
  switch (kind) {
    case ShapeKind::LShape:
      for (const auto& r : {kLVertical, kLHorizontal}) {
        auto c = rect_corners(r);
        pts.insert(pts.end(), c.begin(), c.end());
      }
      break;
    case ShapeKind::TShape:
      for (const auto& r : {kTBar, kTStem}) {
        auto c = rect_corners(r);
        pts.insert(pts.end(), c.begin(), c.end());
      }
      break;
    case ShapeKind::Star: pts = star(); break;
    default: break;
  }
  return pts;
}

double round_radius(ShapeKind kind) {
  return kind == ShapeKind::Cylinder ? kCylinderRadius : kRingOuter;
}

struct GraspTemplate {
  double u, v, theta;
};

// Two templates per kind, in shape units. theta is the jaw closing direction.
std::vector<GraspTemplate> grasp_templates(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Cylinder:
      // Two antipodal axes through the centre.
      return {{0.0, 0.0, 0.0}, {0.0, 0.0, kPi / 2}};
    case ShapeKind::LShape:
      // Across the vertical arm, and across the horizontal arm.
      return {{-0.55, -0.25, 0.0}, {0.4, 0.65, kPi / 2}};
    case ShapeKind::TShape:
      // Across the stem, and across one end of the bar.
      return {{0.0, 0.35, 0.0}, {-0.55, -0.65, kPi / 2}};
    case ShapeKind::Star: {
      // Across arms 0 and 2, perpendicular to each arm.
      std::vector<GraspTemplate> t;
      for (int arm : {0, 2}) {
        const double a = -kPi / 2 + arm * 2 * kPi / kStarPoints;
        t.push_back({0.55 * std::cos(a), 0.55 * std::sin(a), a + kPi / 2});
      }
      return t;
    }
    case ShapeKind::Ring:
      // Radially across the band on opposite sides.
      return {{0.7, 0.0, 0.0}, {-0.7, 0.0, 0.0}};
  }
  return {};
}

// Rotation that places the templates. Symmetric silhouettes look the same
// under part of their rotation, so the pose rotation is reduced to a
// canonical representative; otherwise identical images would carry
// different labels.
double template_rotation(const ObjectPose& pose) {
  switch (pose.kind) {
    case ShapeKind::Cylinder:
    case ShapeKind::Ring:
      return 0.0;
    case ShapeKind::Star: {
      const double period = 2 * kPi / kStarPoints;
      return pose.rotation - period * std::round(pose.rotation / period);
    }
    default:
      return pose.rotation;
  }
}

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::LShape: return "lshape";
    case ShapeKind::Star: return "star";
    case ShapeKind::TShape: return "tshape";
    case ShapeKind::Ring: return "ring";
  }
  return "unknown";
}

ShapeKind parse_shape_kind(std::string_view name) {
  const std::string n = lower(name);
  for (ShapeKind k : kAllKinds) {
    if (n == to_string(k)) return k;
  }
  if (n == "l") return ShapeKind::LShape;
  if (n == "t") return ShapeKind::TShape;
  throw ConfigError("unknown shape kind '" + std::string(name) + "'");
}

std::vector<ShapeKind> parse_shape_kinds(std::string_view comma_list) {
  std::vector<ShapeKind> kinds;
  std::size_t start = 0;
  while (start <= comma_list.size()) {
    const std::size_t end = std::min(comma_list.find(',', start), comma_list.size());
    const auto item = comma_list.substr(start, end - start);
    if (!lower(item).empty()) kinds.push_back(parse_shape_kind(item));
    start = end + 1;
  }
  return kinds;
}

bool silhouette_contains(const ObjectPose& pose, double x, double y) {
  const double dx = x - pose.cx, dy = y - pose.cy;
  const double c = std::cos(pose.rotation), s = std::sin(pose.rotation);
  // Inverse rotation, then unscale.
  const double u = (c * dx + s * dy) / pose.scale;
  const double v = (-s * dx + c * dy) / pose.scale;
  return local_contains(pose.kind, u, v);
}

Box silhouette_bounds(const ObjectPose& pose) {
  const auto pts = outline(pose.kind);
  if (pts.empty()) {
    const double r = round_radius(pose.kind) * pose.scale;
    return {pose.cx, pose.cy, 2 * r, 2 * r};
  }
  const double c = std::cos(pose.rotation), s = std::sin(pose.rotation);
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& p : pts) {
    const double x = pose.cx + pose.scale * (c * p.u - s * p.v);
    const double y = pose.cy + pose.scale * (s * p.u + c * p.v);
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  return {(x0 + x1) / 2, (y0 + y1) / 2, y1 - y0, x1 - x0};
}

Tensor render_scene(std::span<const ObjectPose> poses, std::size_t image_size,
                    const RenderOptions& options) {
  if (image_size == 0) throw ConfigError("image_size must be >= 1");
  const double extent = static_cast<double>(image_size);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Box b = silhouette_bounds(poses[i]);
    if (!(poses[i].scale > 0) || b.left() < 0 || b.top() < 0 || b.right() > extent ||
        b.bottom() > extent) {
      throw ConfigError("pose " + std::to_string(i) + " (" + std::string(to_string(poses[i].kind)) +
                        ") is not inside the " + std::to_string(image_size) + "px image");
    }
  }
  Tensor image({1, image_size, image_size});
  for (const auto& pose : poses) {
    const Box b = silhouette_bounds(pose);
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.top())));
    const auto y1 = static_cast<std::size_t>(std::min(extent, std::ceil(b.bottom())));
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.left())));
    const auto x1 = static_cast<std::size_t>(std::min(extent, std::ceil(b.right())));
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        if (silhouette_contains(pose, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) {
          image.at(0, y, x) = 1.0;
        }
      }
    }
  }
  if (options.noise_sigma > 0) {
    Rng rng(options.noise_seed);
    std::normal_distribution<double> noise(0.0, options.noise_sigma);
    for (double& v : image.data()) {
      v = static_cast<double>(static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0)));
    }
  }
  return image;
}

std::vector<GraspLabel> grasp_labels_for(const ObjectPose& pose, std::size_t object_index) {
  const double rotation = template_rotation(pose);
  const double c = std::cos(rotation), s = std::sin(rotation);
  std::vector<GraspLabel> labels;
  for (const auto& t : grasp_templates(pose.kind)) {
    GraspRect r;
    r.cx = pose.cx + pose.scale * (c * t.u - s * t.v);
    r.cy = pose.cy + pose.scale * (s * t.u + c * t.v);
    r.w = kGraspOpening * pose.scale;
    r.h = kGraspJaw * pose.scale;
    r.theta = normalize_grasp_angle(t.theta + rotation);
    labels.push_back({r, object_index, pose.kind});
  }
  return labels;
}

namespace {

std::vector<ShapeKind> scene_kinds(const DatasetConfig& config, std::size_t global_index, Rng& rng) {
  std::vector<ShapeKind> kinds = config.required_kinds;
  if (kinds.size() > config.objects_per_scene) {
    throw ConfigError("more required kinds than objects_per_scene");
  }
  const std::size_t remaining = config.objects_per_scene - kinds.size();
  const std::size_t k = config.allowed_kinds.size();
  if (config.mixed) {
    std::vector<ShapeKind> pool;
    for (ShapeKind kind : config.allowed_kinds) {
      if (std::find(config.required_kinds.begin(), config.required_kinds.end(), kind) ==
          config.required_kinds.end()) {
        pool.push_back(kind);
      }
    }
    if (pool.empty()) pool = config.allowed_kinds;
    std::vector<ShapeKind> deck;
    while (deck.size() < remaining) {
      std::vector<ShapeKind> round = pool;
      for (std::size_t i = round.size(); i > 1; --i) std::swap(round[i - 1], round[rng.below(i)]);
      deck.insert(deck.end(), round.begin(), round.end());
    }
    kinds.insert(kinds.end(), deck.begin(), deck.begin() + static_cast<std::ptrdiff_t>(remaining));
  } else {
    const ShapeKind kind = config.schedule == KindSchedule::Cyclic
                               ? config.allowed_kinds[global_index % k]
                               : config.allowed_kinds[rng.below(k)];
    kinds.insert(kinds.end(), remaining, kind);
  }
  return kinds;
}

}  // namespace

std::vector<LabeledScene> sample_dataset(const DatasetConfig& config) {
  if (config.objects_per_scene == 0) throw ConfigError("objects_per_scene must be >= 1");
  if (config.allowed_kinds.empty()) throw ConfigError("allowed_kinds must not be empty");
  if (!(config.min_scale > 0) || config.max_scale < config.min_scale) {
    throw ConfigError("scale range must satisfy 0 < min_scale <= max_scale");
  }
  const double extent = static_cast<double>(config.image_size);
  std::vector<LabeledScene> scenes(config.num_scenes);

  // Scenes are independent; each owns a generator split from (seed, index).
  parallel_for(config.num_scenes, [&](std::size_t i) {
    const std::size_t global = config.first_index + i;
    LabeledScene& scene = scenes[i];
    scene.seed = derive_seed(config.seed, "scene", global);
    scene.id = config.id_prefix + "_" + std::to_string(global);
    Rng rng(scene.seed);
    const auto kinds = scene_kinds(config, global, rng);
    std::vector<Box> placed;
    for (std::size_t obj = 0; obj < kinds.size(); ++obj) {
      bool ok = false;
      for (std::size_t attempt = 0; attempt < config.max_attempts && !ok; ++attempt) {
        ObjectPose pose;
        pose.kind = kinds[obj];
        pose.scale = rng.uniform(config.min_scale, config.max_scale);
        pose.rotation = rng.uniform(0.0, 2 * kPi);
        const Box local = silhouette_bounds(pose);  // centred at the origin
        const double margin = 1.0;
        const double lo_x = margin - local.left(), hi_x = extent - margin - local.right();
        const double lo_y = margin - local.top(), hi_y = extent - margin - local.bottom();
        if (hi_x < lo_x || hi_y < lo_y) continue;
        pose.cx = rng.uniform(lo_x, hi_x);
        pose.cy = rng.uniform(lo_y, hi_y);
        const Box bounds = silhouette_bounds(pose);
        if (std::any_of(placed.begin(), placed.end(),
                        [&](const Box& b) { return overlaps(b, bounds, 1.0); })) {
          continue;
        }
        placed.push_back(bounds);
        scene.poses.push_back(pose);
        ok = true;
      }
      if (!ok) {
        throw ConfigError("could not place object " + std::to_string(obj) + " of scene " +
                          scene.id + " after " + std::to_string(config.max_attempts) +
                          " attempts; use fewer or smaller objects");
      }
    }
    for (std::size_t obj = 0; obj < scene.poses.size(); ++obj) {
      auto labels = grasp_labels_for(scene.poses[obj], obj);
      scene.grasps.insert(scene.grasps.end(), labels.begin(), labels.end());
    }
    scene.image = render_scene(scene.poses, config.image_size,
                               {config.noise_sigma, derive_seed(scene.seed, "noise")});
  });
  return scenes;
}

}  // namespace graspfs
