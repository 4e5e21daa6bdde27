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

#include "hmdp/geom.hpp"

#include "hmdp/common.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <string>

namespace hmdp::geom
{

namespace
{

constexpr double kBoundaryEps = 1e-9;

Aabb bounds_of(const std::vector<Vec2> & pts)
{
  Aabb box{pts.front(), pts.front()};
  for (const auto & p : pts) {
    box.min.x = std::min(box.min.x, p.x);
    box.min.y = std::min(box.min.y, p.y);
    box.max.x = std::max(box.max.x, p.x);
    box.max.y = std::max(box.max.y, p.y);
  }
  return box;
}

bool finite(Vec2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

int orientation(Vec2 a, Vec2 b, Vec2 c)
{
  const double v = cross(b - a, c - a);
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  return 0;
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p)
{
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2)
{
  if (std::max(p1.x, p2.x) < std::min(q1.x, q2.x) || std::max(q1.x, q2.x) < std::min(p1.x, p2.x) ||
      std::max(p1.y, p2.y) < std::min(q1.y, q2.y) || std::max(q1.y, q2.y) < std::min(p1.y, p2.y)) {
    return false;
  }
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

double ring_signed_area(const std::vector<Vec2> & v)
{
  double twice = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    twice += cross(v[i], v[(i + 1) % n]);
  }
  return 0.5 * twice;
}

}  // namespace

double normalize_angle(double theta)
{
  constexpr double pi = std::numbers::pi;
  if (theta > -pi && theta <= pi) {
    return theta;
  }
  double r = std::remainder(theta, 2.0 * pi);
  if (r <= -pi) {
    r += 2.0 * pi;
  } else if (r > pi) {
    r -= 2.0 * pi;
  }
  return r;
}

Vec2 RigidTransform::apply(Vec2 p) const
{
  const double c = std::cos(dtheta);
  const double s = std::sin(dtheta);
  return {c * p.x - s * p.y + dx, s * p.x + c * p.y + dy};
}

Pose RigidTransform::apply(const Pose & p) const
{
  const Vec2 q = apply(p.position());
  return Pose(q.x, q.y, p.heading() + dtheta);
}

RigidTransform RigidTransform::inverse() const
{
  const double c = std::cos(dtheta);
  const double s = std::sin(dtheta);
  // R^T (p - t)
  return {-(c * dx + s * dy), -(-s * dx + c * dy), -dtheta};
}

RigidTransform RigidTransform::compose(const RigidTransform & inner) const
{
  const Vec2 t = apply(Vec2{inner.dx, inner.dy});
  return {t.x, t.y, normalize_angle(dtheta + inner.dtheta)};
}

RigidTransform RigidTransform::to_local(const Pose & origin)
{
  return RigidTransform{origin.x(), origin.y(), origin.heading()}.inverse();
}

OrientedBox::OrientedBox(const Pose & center, double half_length, double half_width)
: center_(center), half_length_(half_length), half_width_(half_width)
{
  if (!(half_length > 0.0) || !(half_width > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "oriented box extents must be positive");
  }
}

std::array<Vec2, 4> OrientedBox::corners() const
{
  const Vec2 c = center_.position();
  const Vec2 f = half_length_ * center_.direction();
  const Vec2 l = half_width_ * Vec2{-center_.direction().y, center_.direction().x};
  return {c + f + l, c - f + l, c - f - l, c + f - l};
}

bool OrientedBox::contains(Vec2 p) const
{
  const Vec2 d = p - center_.position();
  const Vec2 u = center_.direction();
  const Vec2 v{-u.y, u.x};
  return std::abs(dot(d, u)) <= half_length_ && std::abs(dot(d, v)) <= half_width_;
}

bool obb_intersects(const OrientedBox & a, const OrientedBox & b)
{
  const Vec2 t = b.center().position() - a.center().position();
  const double reach = a.circumradius() + b.circumradius();
  if (dot(t, t) > reach * reach) {
    return false;
  }

  const Vec2 au = a.center().direction();
  const Vec2 av{-au.y, au.x};
  const Vec2 bu = b.center().direction();
  const Vec2 bv{-bu.y, bu.x};

  const std::array<Vec2, 4> axes{au, av, bu, bv};
  for (const auto & axis : axes) {
    const double ra = a.half_length() * std::abs(dot(au, axis)) + a.half_width() * std::abs(dot(av, axis));
    const double rb = b.half_length() * std::abs(dot(bu, axis)) + b.half_width() * std::abs(dot(bv, axis));
    if (std::abs(dot(t, axis)) > ra + rb) {
      return false;
    }
  }
  return true;
}

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points))
{
  if (points_.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "polyline needs at least 2 points");
  }
  cumulative_.reserve(points_.size());
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!finite(points_[i])) {
      throw Error(ErrorKind::InvalidArgument, "polyline point is not finite");
    }
    const double seg = norm(points_[i] - points_[i - 1]);
    if (!(seg > 0.0)) {
      throw Error(
        ErrorKind::InvalidArgument, "polyline has repeated consecutive points", std::to_string(i));
    }
    cumulative_.push_back(cumulative_.back() + seg);
  }
  bounds_ = bounds_of(points_);
  for (std::size_t first = 0; first + 1 < points_.size(); first += kChunk) {
    const std::size_t last = std::min(first + kChunk, points_.size() - 1);
    chunk_bounds_.push_back(
      bounds_of(std::vector<Vec2>(points_.begin() + static_cast<std::ptrdiff_t>(first),
                                  points_.begin() + static_cast<std::ptrdiff_t>(last) + 1)));
  }
}

Vec2 Polyline::segment_tangent(std::size_t i) const
{
  const Vec2 d = points_[i + 1] - points_[i];
  return (1.0 / (cumulative_[i + 1] - cumulative_[i])) * d;
}

Pose Polyline::pose_at(double s) const
{
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  i = std::min(i, segment_count() - 1);
  const Vec2 t = segment_tangent(i);
  const Vec2 p = points_[i] + (s - cumulative_[i]) * t;
  return Pose(p.x, p.y, std::atan2(t.y, t.x));
}

Polyline Polyline::transformed(const RigidTransform & tf) const
{
  std::vector<Vec2> out;
  out.reserve(points_.size());
  for (const auto & p : points_) {
    out.push_back(tf.apply(p));
  }
  return Polyline(std::move(out));
}

double point_segment_distance_sq(Vec2 p, Vec2 a, Vec2 b)
{
  const Vec2 ab = b - a;
  const double len_sq = dot(ab, ab);
  double t = len_sq > 0.0 ? dot(p - a, ab) / len_sq : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 d = p - (a + t * ab);
  return dot(d, d);
}

double aabb_distance_sq(Vec2 p, const Aabb & box)
{
  const double dx = std::max({box.min.x - p.x, 0.0, p.x - box.max.x});
  const double dy = std::max({box.min.y - p.y, 0.0, p.y - box.max.y});
  return dx * dx + dy * dy;
}

namespace
{

/// Updates `out` when some segment of `line` is strictly closer than `best_sq`.
bool project_pruned(Vec2 p, const Polyline & line, double & best_sq, Projection & out)
{
  const auto & pts = line.points();
  const auto & cum = line.cumulative();
  const auto & chunks = line.chunk_bounds();
  bool improved = false;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    if (aabb_distance_sq(p, chunks[c]) >= best_sq) {
      continue;
    }
    const std::size_t first = c * Polyline::kChunk;
    const std::size_t last = std::min(first + Polyline::kChunk, pts.size() - 1);
    for (std::size_t i = first; i < last; ++i) {
      const Vec2 a = pts[i];
      const Vec2 ab = pts[i + 1] - a;
      const double seg_len = cum[i + 1] - cum[i];
      const double t = std::clamp(dot(p - a, ab) / (seg_len * seg_len), 0.0, 1.0);
      const Vec2 d = p - (a + t * ab);
      const double dist_sq = dot(d, d);
      if (dist_sq < best_sq) {
        best_sq = dist_sq;
        out.arc_length = cum[i] + t * seg_len;
        out.segment_index = i;
        out.tangent = (1.0 / seg_len) * ab;
        improved = true;
      }
    }
  }
  return improved;
}

}  // namespace

Projection project_onto_polyline(Vec2 p, const Polyline & line)
{
  double best = std::numeric_limits<double>::infinity();
  Projection out;
  project_pruned(p, line, best, out);
  out.lateral = std::sqrt(best);
  return out;
}

NearestSegment nearest_segment(Vec2 p, std::span<const Polyline> lines)
{
  double best = std::numeric_limits<double>::infinity();
  NearestSegment out;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    if (project_pruned(p, lines[l], best, out.projection)) {
      out.line = l;
    }
  }
  out.projection.lateral = std::sqrt(best);
  return out;
}

Polygon::Polygon(std::vector<Vec2> vertices) : vertices_(std::move(vertices))
{
  const std::size_t n = vertices_.size();
  if (n < 3) {
    throw Error(ErrorKind::InvalidArgument, "polygon needs at least 3 vertices");
  }
  for (const auto & v : vertices_) {
    if (!finite(v)) {
      throw Error(ErrorKind::InvalidArgument, "polygon vertex is not finite");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (vertices_[i] == vertices_[(i + 1) % n]) {
      throw Error(ErrorKind::InvalidArgument, "polygon has repeated consecutive vertices");
    }
  }
  // Simplicity: no two non-adjacent edges may touch.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(vertices_[i], vertices_[(i + 1) % n], vertices_[j], vertices_[(j + 1) % n])) {
        throw Error(ErrorKind::InvalidArgument, "polygon is not simple");
      }
    }
  }
  const double area = ring_signed_area(vertices_);
  if (area == 0.0) {
    throw Error(ErrorKind::InvalidArgument, "polygon has zero area");
  }
  if (area < 0.0) {
    std::reverse(vertices_.begin(), vertices_.end());
  }
  bounds_ = bounds_of(vertices_);
}

double Polygon::signed_area() const { return ring_signed_area(vertices_); }

Vec2 Polygon::centroid() const
{
  double cx = 0.0;
  double cy = 0.0;
  double twice_area = 0.0;
  for (std::size_t i = 0, n = vertices_.size(); i < n; ++i) {
    const Vec2 a = vertices_[i];
    const Vec2 b = vertices_[(i + 1) % n];
    const double c = cross(a, b);
    twice_area += c;
    cx += (a.x + b.x) * c;
    cy += (a.y + b.y) * c;
  }
  return {cx / (3.0 * twice_area), cy / (3.0 * twice_area)};
}

Polygon Polygon::transformed(const RigidTransform & tf) const
{
  std::vector<Vec2> out;
  out.reserve(vertices_.size());
  for (const auto & v : vertices_) {
    out.push_back(tf.apply(v));
  }
  return Polygon(std::move(out));
}

bool point_in_polygon(Vec2 p, const Polygon & poly)
{
  if (!poly.bounds().contains(p, kBoundaryEps)) {
    return false;
  }
  const auto & v = poly.vertices();
  bool inside = false;
  for (std::size_t i = 0, n = v.size(), j = n - 1; i < n; j = i++) {
    const Vec2 a = v[j];
    const Vec2 b = v[i];
    if (point_segment_distance_sq(p, a, b) <= kBoundaryEps * kBoundaryEps) {
      return true;
    }
    if ((b.y > p.y) != (a.y > p.y)) {
      const double x_cross = b.x + (p.y - b.y) * (a.x - b.x) / (a.y - b.y);
      if (p.x < x_cross) {
        inside = !inside;
      }
    }
  }
  return inside;
}

bool point_in_any(Vec2 p, std::span<const Polygon> polys)
{
  return std::any_of(
    polys.begin(), polys.end(), [p](const Polygon & poly) { return point_in_polygon(p, poly); });
}

bool box_in_polygons(const OrientedBox & box, std::span<const Polygon> polys, int samples_per_edge)
{
  const auto corners = box.corners();
  for (const auto & c : corners) {
    if (!point_in_any(c, polys)) {
      return false;
    }
  }
  for (std::size_t e = 0; e < 4; ++e) {
    const Vec2 a = corners[e];
    const Vec2 b = corners[(e + 1) % 4];
    for (int s = 1; s <= samples_per_edge; ++s) {
      const double t = static_cast<double>(s) / (samples_per_edge + 1);
      if (!point_in_any(a + t * (b - a), polys)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace hmdp::geom
