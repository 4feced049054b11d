#pragma once

#include <numbers>

namespace graspfs {

// Axis-aligned box in pixel coordinates: w spans x, h spans y.
struct Box {
  double cx = 0, cy = 0, h = 0, w = 0;

  double left() const { return cx - w / 2; }
  double right() const { return cx + w / 2; }
  double top() const { return cy - h / 2; }
  double bottom() const { return cy + h / 2; }
  double area() const { return h * w; }
  Box dilated(double margin) const { return {cx, cy, h + 2 * margin, w + 2 * margin}; }
  bool contains(double x, double y) const {
    return x >= left() && x <= right() && y >= top() && y <= bottom();
  }

  friend bool operator==(const Box&, const Box&) = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
bool overlaps(const Box& a, const Box& b, double gap = 0.0);

// Parallel-jaw grasp rectangle. The jaws close along direction theta; w is
// the opening along that direction and h the jaw extent across it. theta and
// theta + pi describe the same grasp, so theta is kept in [-pi/2, pi/2).
struct GraspRect {
  double cx = 0, cy = 0, h = 0, w = 0, theta = 0;

  Box aabb() const;
  friend bool operator==(const GraspRect&, const GraspRect&) = default;
};

// Wraps any angle into [-pi/2, pi/2).
double normalize_grasp_angle(double theta);

}  // namespace graspfs
