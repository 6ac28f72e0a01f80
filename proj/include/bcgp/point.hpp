#pragma once

#include <cmath>
#include <vector>

namespace bcgp {

/// Plate coordinate in millimetres. One-dimensional problems leave y at 0.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

using Points = std::vector<Point>;

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace bcgp
