#include "graspfs/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace graspfs {

double intersection_area(const Box& a, const Box& b) {
  const double ix = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (ix <= 0 || iy <= 0) return 0.0;
  return ix * iy;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

bool overlaps(const Box& a, const Box& b, double gap) {
  return a.left() < b.right() + gap && b.left() < a.right() + gap && a.top() < b.bottom() + gap &&
         b.top() < a.bottom() + gap;
}

Box GraspRect::aabb() const {
  const double c = std::abs(std::cos(theta)), s = std::abs(std::sin(theta));
  return {cx, cy, w * s + h * c, w * c + h * s};
}

double normalize_grasp_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double t = std::fmod(theta + pi / 2, pi);
  if (t < 0) t += pi;
  double out = t - pi / 2;
  if (out >= pi / 2) out -= pi;
  if (out < -pi / 2) out = -pi / 2;
  return out;
}

}  // namespace graspfs
