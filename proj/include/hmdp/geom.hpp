// Copyright 2026 The hmdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace hmdp::geom
{

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit_from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

/// Wraps to (-pi, pi]. Values already inside the interval are returned unchanged,
/// so the function is idempotent bit-for-bit.
double normalize_angle(double theta);

/// Smallest signed difference a - b, wrapped to (-pi, pi].
inline double angle_diff(double a, double b) { return normalize_angle(a - b); }

/// Planar pose; heading is normalized at construction.
class Pose
{
public:
  constexpr Pose() = default;
  Pose(double x, double y, double heading) : x_(x), y_(y), heading_(normalize_angle(heading)) {}

  double x() const { return x_; }
  double y() const { return y_; }
  double heading() const { return heading_; }
  Vec2 position() const { return {x_, y_}; }
  Vec2 direction() const { return unit_from_angle(heading_); }

  friend bool operator==(const Pose &, const Pose &) = default;

private:
  double x_ = 0.0;
  double y_ = 0.0;
  double heading_ = 0.0;
};

/// Maps a point expressed in one frame into another: p' = R(dtheta) p + (dx, dy).
struct RigidTransform
{
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;

  Vec2 apply(Vec2 p) const;
  Pose apply(const Pose & p) const;
  RigidTransform inverse() const;
  /// (this ∘ inner)(p) = this(inner(p)).
  RigidTransform compose(const RigidTransform & inner) const;

  /// Transform taking world coordinates into the local frame of `origin`.
  static RigidTransform to_local(const Pose & origin);

  friend bool operator==(const RigidTransform &, const RigidTransform &) = default;
};

struct Aabb
{
  Vec2 min;
  Vec2 max;

  bool contains(Vec2 p, double margin = 0.0) const
  {
    return p.x >= min.x - margin && p.x <= max.x + margin && p.y >= min.y - margin &&
           p.y <= max.y + margin;
  }
  bool overlaps(const Aabb & o) const
  {
    return min.x <= o.max.x && o.min.x <= max.x && min.y <= o.max.y && o.min.y <= max.y;
  }
};

class OrientedBox
{
public:
  OrientedBox(const Pose & center, double half_length, double half_width);

  static OrientedBox from_dims(const Pose & center, double length, double width)
  {
    return OrientedBox(center, 0.5 * length, 0.5 * width);
  }

  const Pose & center() const { return center_; }
  double half_length() const { return half_length_; }
  double half_width() const { return half_width_; }
  double circumradius() const { return std::hypot(half_length_, half_width_); }

  /// Counter-clockwise, starting at front-left.
  std::array<Vec2, 4> corners() const;
  bool contains(Vec2 p) const;

private:
  Pose center_;
  double half_length_;
  double half_width_;
};

/// Separating-axis test over the four face normals; touching boxes overlap.
bool obb_intersects(const OrientedBox & a, const OrientedBox & b);

struct Projection
{
  double arc_length = 0.0;
  double lateral = 0.0;
  std::size_t segment_index = 0;
  Vec2 tangent;
};

class Polyline
{
public:
  explicit Polyline(std::vector<Vec2> points);

  const std::vector<Vec2> & points() const { return points_; }
  const std::vector<double> & cumulative() const { return cumulative_; }
  double length() const { return cumulative_.back(); }
  std::size_t segment_count() const { return points_.size() - 1; }
  Vec2 segment_tangent(std::size_t i) const;
  const Aabb & bounds() const { return bounds_; }

  /// Segments are grouped in runs of kChunk with a bounding box each, so
  /// nearest-segment queries can skip far runs.
  static constexpr std::size_t kChunk = 8;
  const std::vector<Aabb> & chunk_bounds() const { return chunk_bounds_; }

  /// Point and heading at arc length s; s is clamped to [0, length].
  Pose pose_at(double s) const;

  Polyline transformed(const RigidTransform & tf) const;

  friend bool operator==(const Polyline & a, const Polyline & b) { return a.points_ == b.points_; }

private:
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
  Aabb bounds_;
  std::vector<Aabb> chunk_bounds_;
};

/// Closest point on the polyline. Ties go to the lowest segment index.
Projection project_onto_polyline(Vec2 p, const Polyline & line);

/// Squared distance from p to the box (0 inside).
double aabb_distance_sq(Vec2 p, const Aabb & box);

/// Closest point over several polylines; ties go to the lowest line index.
struct NearestSegment
{
  std::size_t line = 0;
  Projection projection;
};
NearestSegment nearest_segment(Vec2 p, std::span<const Polyline> lines);

/// Squared distance from p to segment [a, b].
double point_segment_distance_sq(Vec2 p, Vec2 a, Vec2 b);

class Polygon
{
public:
  /// Requires >= 3 vertices forming a simple polygon; clockwise input is reversed
  /// so the stored ring is counter-clockwise.
  explicit Polygon(std::vector<Vec2> vertices);

  const std::vector<Vec2> & vertices() const { return vertices_; }
  const Aabb & bounds() const { return bounds_; }
  double signed_area() const;
  Vec2 centroid() const;

  Polygon transformed(const RigidTransform & tf) const;

  friend bool operator==(const Polygon & a, const Polygon & b) { return a.vertices_ == b.vertices_; }

private:
  std::vector<Vec2> vertices_;
  Aabb bounds_;
};

/// Even-odd ray casting; points on the boundary (within 1e-9 m) count as inside.
bool point_in_polygon(Vec2 p, const Polygon & poly);

/// True when p lies in at least one polygon.
bool point_in_any(Vec2 p, std::span<const Polygon> polys);

/// All four corners inside the union and `samples_per_edge` interior points of
/// every edge inside the union.
bool box_in_polygons(
  const OrientedBox & box, std::span<const Polygon> polys, int samples_per_edge = 8);

}  // namespace hmdp::geom
