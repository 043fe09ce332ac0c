#include "ixda/geometry.hpp"

#include <algorithm>
#include <limits>

namespace ixda {

double normalize_angle(double radians) {
  double a = std::fmod(radians + kPi, 2.0 * kPi);
  if (a < 0.0) {
    a += 2.0 * kPi;
  }
  a -= kPi;
  // fmod can land exactly on +pi after the shift for inputs like -pi - 2k*pi.
  if (a >= kPi) {
    a -= 2.0 * kPi;
  }
  return a;
}

bool is_convex(std::span<const Vec2> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) {
    return false;
  }
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[(i + 1) % n];
    const Vec2 c = polygon[(i + 2) % n];
    const double z = cross(b - a, c - b);
    if (std::abs(z) < 1e-12) {
      continue;
    }
    const int s = z > 0 ? 1 : -1;
    if (sign == 0) {
      sign = s;
    } else if (s != sign) {
      return false;
    }
  }
  return sign != 0;
}

bool contains(std::span<const Vec2> polygon, Vec2 p, double eps) {
  const std::size_t n = polygon.size();
  if (n < 3) {
    return false;
  }
  bool has_pos = false;
  bool has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[(i + 1) % n];
    const Vec2 edge = b - a;
    const double len = norm(edge);
    const double z = len > 0.0 ? cross(edge, p - a) / len : 0.0;
    if (z > eps) {
      has_pos = true;
    } else if (z < -eps) {
      has_neg = true;
    }
    if (has_pos && has_neg) {
      return false;
    }
  }
  return true;
}

Vec2 centroid(std::span<const Vec2> polygon) {
  // Area-weighted centroid; falls back to the vertex mean for degenerate input.
  double area2 = 0.0;
  Vec2 acc{};
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[(i + 1) % n];
    const double w = cross(a, b);
    area2 += w;
    acc = acc + (a + b) * w;
  }
  if (std::abs(area2) < 1e-12) {
    Vec2 mean{};
    for (const auto& v : polygon) {
      mean = mean + v;
    }
    return n == 0 ? mean : mean * (1.0 / static_cast<double>(n));
  }
  return acc * (1.0 / (3.0 * area2));
}

namespace {

void project(std::span<const Vec2> poly, Vec2 axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& v : poly) {
    const double d = dot(v, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
}

// Returns true when some edge normal of `a` or `b` separates them, allowing
// `slack` of penetration (positive slack tolerates touching).
bool separated(std::span<const Vec2> a, std::span<const Vec2> b, double slack) {
  for (int pass = 0; pass < 2; ++pass) {
    const auto poly = pass == 0 ? a : b;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2 e = poly[(i + 1) % poly.size()] - poly[i];
      const double len = norm(e);
      if (len == 0.0) {
        continue;
      }
      const Vec2 axis{-e.y / len, e.x / len};
      double alo, ahi, blo, bhi;
      project(a, axis, alo, ahi);
      project(b, axis, blo, bhi);
      if (ahi < blo + slack || bhi < alo + slack) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

bool interiors_overlap(std::span<const Vec2> a, std::span<const Vec2> b, double eps) {
  return !separated(a, b, eps);
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) {
    return distance(p, a);
  }
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

double point_polygon_distance(std::span<const Vec2> polygon, Vec2 p) {
  if (contains(polygon, p)) {
    return 0.0;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    best = std::min(best, point_segment_distance(p, polygon[i], polygon[(i + 1) % polygon.size()]));
  }
  return best;
}

std::vector<Vec2> OrientedBox::corners() const {
  const Vec2 u{std::cos(heading), std::sin(heading)};
  const Vec2 v{-u.y, u.x};
  const Vec2 l = u * half_length;
  const Vec2 w = v * half_width;
  return {center + l + w, center - l + w, center - l - w, center + l - w};
}

double box_point_distance(const OrientedBox& box, Vec2 p) {
  const Vec2 u{std::cos(box.heading), std::sin(box.heading)};
  const Vec2 d = p - box.center;
  const double along = dot(d, u);
  const double across = cross(u, d);
  const double dx = std::max(0.0, std::abs(along) - box.half_length);
  const double dy = std::max(0.0, std::abs(across) - box.half_width);
  return std::hypot(dx, dy);
}

bool box_circle_intersect(const OrientedBox& box, Vec2 center, double radius) {
  return box_point_distance(box, center) <= radius + 1e-12;
}

bool boxes_intersect(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  return !separated(ca, cb, -1e-12);
}

}  // namespace ixda
