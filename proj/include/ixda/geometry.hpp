#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace ixda {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double k) { return {a.x * k, a.y * k}; }
  friend Vec2 operator*(double k, Vec2 a) { return {a.x * k, a.y * k}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Wraps an angle into [-pi, pi).
double normalize_angle(double radians);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, normalized to [-pi, pi)

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Convex polygon given by its vertices in order (either winding).
using Polygon = std::vector<Vec2>;

bool is_convex(std::span<const Vec2> polygon);
/// Closed containment: boundary points count as inside.
bool contains(std::span<const Vec2> polygon, Vec2 p, double eps = 1e-9);
Vec2 centroid(std::span<const Vec2> polygon);
/// True iff the interiors of two convex polygons overlap (touching is allowed).
bool interiors_overlap(std::span<const Vec2> a, std::span<const Vec2> b, double eps = 1e-9);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);
/// Distance from p to the polygon boundary or 0 if p is inside.
double point_polygon_distance(std::span<const Vec2> polygon, Vec2 p);

/// Oriented rectangle centred on `center`, long axis along `heading`.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;

  std::vector<Vec2> corners() const;
};

/// Euclidean distance from p to the box, 0 if inside.
double box_point_distance(const OrientedBox& box, Vec2 p);
/// Closed intersection test between a box and a disc (tangency counts).
bool box_circle_intersect(const OrientedBox& box, Vec2 center, double radius);
/// Closed intersection test between two boxes (separating axis theorem).
bool boxes_intersect(const OrientedBox& a, const OrientedBox& b);

}  // namespace ixda
