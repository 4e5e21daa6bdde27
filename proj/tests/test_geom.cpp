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

#include "doctest.h"
#include "oracles.hpp"

#include "hmdp/common.hpp"
#include "hmdp/geom.hpp"
#include "hmdp/rng.hpp"

#include <numbers>

using namespace hmdp;
using namespace hmdp::geom;

namespace
{

oracle::Rect to_rect(const OrientedBox & b)
{
  return {b.center().x(), b.center().y(), b.center().heading(), b.half_length(), b.half_width()};
}

OrientedBox random_box(Rng & rng)
{
  return OrientedBox(
    Pose(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.2, 3.2)), rng.uniform(0.3, 2.5),
    rng.uniform(0.2, 1.2));
}

}  // namespace

TEST_CASE("normalize_angle wraps into (-pi, pi] and is idempotent")
{
  constexpr double pi = std::numbers::pi;
  CHECK(normalize_angle(pi) == pi);
  CHECK(normalize_angle(-pi) == pi);
  CHECK(normalize_angle(3.0 * pi) == doctest::Approx(pi));
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-50.0, 50.0);
    const double w = normalize_angle(a);
    CHECK(w > -pi);
    CHECK(w <= pi);
    CHECK(normalize_angle(w) == w);
    CHECK(std::cos(w) == doctest::Approx(std::cos(a)).epsilon(1e-9));
  }
}

TEST_CASE("rigid transforms compose and invert")
{
  const RigidTransform a{1.0, -2.0, 0.7};
  const RigidTransform b{-0.5, 3.0, -2.1};
  const Vec2 p{2.5, -1.25};
  const Vec2 ab = a.compose(b).apply(p);
  const Vec2 seq = a.apply(b.apply(p));
  CHECK(ab.x == doctest::Approx(seq.x));
  CHECK(ab.y == doctest::Approx(seq.y));
  const Vec2 back = a.inverse().apply(a.apply(p));
  CHECK(back.x == doctest::Approx(p.x));
  CHECK(back.y == doctest::Approx(p.y));

  const Pose origin(4.0, 1.0, 0.5);
  const Pose local = RigidTransform::to_local(origin).apply(origin);
  CHECK(local.x() == doctest::Approx(0.0));
  CHECK(local.y() == doctest::Approx(0.0));
  CHECK(local.heading() == doctest::Approx(0.0));
}

TEST_CASE("obb_intersects basic cases")
{
  const OrientedBox a(Pose(0, 0, 0), 0.5, 0.5);
  CHECK(obb_intersects(a, a));
  CHECK_FALSE(obb_intersects(a, OrientedBox(Pose(3, 0, 0), 0.5, 0.5)));
  // Touching faces count as overlap.
  CHECK(obb_intersects(a, OrientedBox(Pose(1.0, 0, 0), 0.5, 0.5)));
  CHECK_FALSE(obb_intersects(a, OrientedBox(Pose(1.0 + 1e-9, 0, 0), 0.5, 0.5)));
}

TEST_CASE("obb_intersects matches the grid oracle on the rotated example")
{
  const OrientedBox a = OrientedBox::from_dims(Pose(0, 0, 0), 2.0, 1.0);
  const OrientedBox b = OrientedBox::from_dims(Pose(1.6, 0, std::numbers::pi / 4), 2.0, 1.0);
  CHECK(obb_intersects(a, b) == oracle::rects_overlap_grid(to_rect(a), to_rect(b)));
  CHECK(obb_intersects(a, b));
}

TEST_CASE("obb_intersects is symmetric and agrees with the grid oracle on random pairs")
{
  Rng rng(11);
  int disagreements = 0;
  for (int i = 0; i < 300; ++i) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    const bool fast = obb_intersects(a, b);
    CHECK(fast == obb_intersects(b, a));
    const bool grid = oracle::rects_overlap_grid(to_rect(a), to_rect(b), 120);
    if (grid) {
      CHECK(fast);  // no false negatives
    } else if (fast) {
      ++disagreements;
      const double tol = std::max(oracle::grid_cell(to_rect(a), 120), oracle::grid_cell(to_rect(b), 120));
      CHECK(oracle::rects_overlap_grid(to_rect(a), to_rect(b), 120, tol));
    }
  }
  CHECK(disagreements < 10);
}

TEST_CASE("point_in_polygon")
{
  const Polygon square({{0, 0}, {4, 0}, {4, 4}, {0, 4}});
  CHECK(point_in_polygon(square.centroid(), square));
  CHECK_FALSE(point_in_polygon({2.0 * 4.0 * std::sqrt(2.0), 0.0}, square));
  CHECK(point_in_polygon({4.0, 2.0}, square));
  CHECK(point_in_polygon({0.0, 0.0}, square));

  const std::vector<oracle::P> l_ring{{0, 0}, {6, 0}, {6, 2}, {2, 2}, {2, 6}, {0, 6}};
  std::vector<Vec2> verts;
  for (auto p : l_ring) verts.push_back({p.x, p.y});
  const Polygon l_shape(verts);
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const oracle::P p{rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0)};
    const bool on_edge = std::abs(p.x - 2.0) < 1e-9 || std::abs(p.y - 2.0) < 1e-9;
    if (on_edge) continue;
    CHECK(point_in_polygon({p.x, p.y}, l_shape) == (oracle::winding_number(l_ring, p) != 0));
  }
  CHECK_FALSE(point_in_polygon({3.0, 3.0}, l_shape));
  CHECK(point_in_polygon({1.0, 3.0}, l_shape));
}

TEST_CASE("polygon validation")
{
  CHECK_THROWS_AS(Polygon({{0, 0}, {1, 0}}), Error);
  CHECK_THROWS_AS(Polygon({{0, 0}, {2, 2}, {2, 0}, {0, 2}}), Error);  // bow-tie
  CHECK_THROWS_AS(Polygon({{0, 0}, {1, 0}, {2, 0}}), Error);          // zero area
  const Polygon cw({{0, 0}, {0, 1}, {1, 1}, {1, 0}});
  CHECK(cw.signed_area() == doctest::Approx(1.0));
}

TEST_CASE("polyline validation")
{
  CHECK_THROWS_AS(Polyline({{0, 0}}), Error);
  CHECK_THROWS_AS(Polyline({{0, 0}, {0, 0}, {1, 0}}), Error);
  const Polyline ok({{0, 0}, {3, 4}, {3, 10}});
  CHECK(ok.length() == doctest::Approx(11.0));
}

TEST_CASE("project_onto_polyline")
{
  const Polyline straight({{0, 0}, {10, 0}});
  const Projection pr = project_onto_polyline({4, 3}, straight);
  CHECK(pr.arc_length == doctest::Approx(4.0));
  CHECK(pr.lateral == doctest::Approx(3.0));
  CHECK(pr.tangent.x == doctest::Approx(1.0));
  CHECK(pr.tangent.y == doctest::Approx(0.0));

  const Polyline bend({{0, 0}, {5, 0}, {5, 5}});
  const Projection at_vertex = project_onto_polyline({5, 0}, bend);
  CHECK(at_vertex.lateral == doctest::Approx(0.0));
  CHECK(at_vertex.arc_length == doctest::Approx(5.0));

  const std::vector<oracle::P> pts{{0, 0}, {5, 0}, {5, 5}};
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const oracle::P p{rng.uniform(4.0, 6.5), rng.uniform(-1.5, 1.0)};
    const auto dense = oracle::dense_projection(pts, p);
    const Projection fast = project_onto_polyline({p.x, p.y}, bend);
    CHECK(std::abs(fast.lateral - dense.distance) < 1e-3);
  }
}

TEST_CASE("projection properties on random polylines")
{
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec2> pts;
    Vec2 cur{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const int n = 2 + static_cast<int>(rng.uniform_index(30));
    for (int i = 0; i < n; ++i) {
      pts.push_back(cur);
      cur = cur + Vec2{rng.uniform(0.5, 4.0), rng.uniform(-3.0, 3.0)};
    }
    const Polyline line(pts);
    const Vec2 p{rng.uniform(-10, 60), rng.uniform(-20, 20)};
    const Projection pr = project_onto_polyline(p, line);
    CHECK(pr.arc_length >= 0.0);
    CHECK(pr.arc_length <= line.length() + 1e-12);
    for (const auto & v : pts) {
      CHECK(pr.lateral <= norm(p - v) + 1e-12);
    }
    const Vec2 off{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    std::vector<Vec2> moved;
    for (const auto & v : pts) moved.push_back(v + off);
    const Projection pm = project_onto_polyline(p + off, Polyline(moved));
    CHECK(std::abs(pm.arc_length - pr.arc_length) < 1e-9);
    CHECK(std::abs(pm.lateral - pr.lateral) < 1e-9);
  }
}

TEST_CASE("nearest_segment picks the closest line")
{
  const std::vector<Polyline> lanes{Polyline({{0, 0}, {10, 0}}), Polyline({{0, 3}, {10, 3}})};
  CHECK(nearest_segment({5, 2.0}, lanes).line == 1);
  CHECK(nearest_segment({5, 1.0}, lanes).line == 0);
  // Equidistant: lowest index wins.
  CHECK(nearest_segment({5, 1.5}, lanes).line == 0);
  CHECK(nearest_segment({5, 1.5}, lanes).projection.lateral == doctest::Approx(1.5));
}

TEST_CASE("box_in_polygons")
{
  const Polygon big({{-20, -20}, {20, -20}, {20, 20}, {-20, 20}});
  const std::vector<Polygon> one{big};
  CHECK(box_in_polygons(OrientedBox(Pose(0, 0, 0.3), 1.0, 0.5), one));
  CHECK_FALSE(box_in_polygons(OrientedBox(Pose(50, 0, 0), 1.0, 0.5), one));

  // Two abutting halves covering the box jointly.
  const std::vector<Polygon> halves{
    Polygon({{-10, -5}, {0, -5}, {0, 5}, {-10, 5}}), Polygon({{0, -5}, {10, -5}, {10, 5}, {0, 5}})};
  const OrientedBox straddle(Pose(0.0, 0.0, 0.4), 2.0, 1.0);
  CHECK(box_in_polygons(straddle, halves));
  bool grid_inside = true;
  oracle::sample_rect(to_rect(straddle), 60, [&](double x, double y) {
    grid_inside = std::abs(x) <= 10.0 && std::abs(y) <= 5.0;
    return grid_inside;
  });
  CHECK(grid_inside);

  // An L-shaped hole in coverage: corners inside, edge midpoint outside.
  const std::vector<Polygon> notch{Polygon({{0, 0}, {10, 0}, {10, 1}, {6, 1}, {6, 3}, {10, 3}, {10, 4}, {0, 4}})};
  const OrientedBox spanning(Pose(7.0, 2.0, std::numbers::pi / 2), 1.5, 0.5);
  CHECK_FALSE(box_in_polygons(spanning, notch));
}
