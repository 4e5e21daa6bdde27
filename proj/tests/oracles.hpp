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

// Independent reference implementations used by the tests. None of these call
// into the library's geometry or scoring code.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle
{

struct P
{
  double x, y;
};

struct Rect
{
  double cx, cy, heading, half_l, half_w;
};

/// Membership in a rotated rectangle, computed in its own frame, with an optional inflation.
inline bool in_rect(const Rect & r, double x, double y, double inflate = 0.0)
{
  const double c = std::cos(r.heading), s = std::sin(r.heading);
  const double dx = x - r.cx, dy = y - r.cy;
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= r.half_l + inflate && std::abs(v) <= r.half_w + inflate;
}

/// Sample an n x n lattice (including edges) over the footprint of `a`.
template <class Fn>
void sample_rect(const Rect & a, int n, Fn && fn)
{
  const double c = std::cos(a.heading), s = std::sin(a.heading);
  for (int i = 0; i < n; ++i) {
    const double u = -a.half_l + 2.0 * a.half_l * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double v = -a.half_w + 2.0 * a.half_w * j / (n - 1);
      if (!fn(a.cx + c * u - s * v, a.cy + s * u + c * v)) return;
    }
  }
}

/// Grid-sampling overlap oracle: any lattice point of one rectangle inside the other.
inline bool rects_overlap_grid(const Rect & a, const Rect & b, int n = 200, double inflate = 0.0)
{
  bool hit = false;
  sample_rect(b, n, [&](double x, double y) {
    hit = in_rect(a, x, y, inflate);
    return !hit;
  });
  if (hit) return true;
  sample_rect(a, n, [&](double x, double y) {
    hit = in_rect(b, x, y, inflate);
    return !hit;
  });
  return hit;
}

/// Lattice spacing of the oracle for a rectangle, used as the boundary tolerance.
inline double grid_cell(const Rect & r, int n = 200)
{
  return std::hypot(2.0 * r.half_l / (n - 1), 2.0 * r.half_w / (n - 1));
}

/// Winding number of a closed ring around p (non-zero means inside).
inline int winding_number(const std::vector<P> & ring, P p)
{
  int wn = 0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const P a = ring[i], b = ring[(i + 1) % n];
    const double side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++wn;
    } else if (b.y <= p.y && side < 0) {
      --wn;
    }
  }
  return wn;
}

/// Closest distance from p to a polyline by sampling `samples` points uniformly in arc length.
struct DenseProjection
{
  double distance = std::numeric_limits<double>::infinity();
  double arc_length = 0.0;
};

inline DenseProjection dense_projection(const std::vector<P> & pts, P p, int samples = 10000)
{
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    cum.push_back(cum.back() + std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y));
  }
  DenseProjection best;
  std::size_t seg = 0;
  for (int k = 0; k < samples; ++k) {
    const double s = cum.back() * k / (samples - 1);
    while (seg + 2 < pts.size() && cum[seg + 1] < s) ++seg;
    const double u = (s - cum[seg]) / (cum[seg + 1] - cum[seg]);
    const double x = pts[seg].x + u * (pts[seg + 1].x - pts[seg].x);
    const double y = pts[seg].y + u * (pts[seg + 1].y - pts[seg].y);
    const double d = std::hypot(p.x - x, p.y - y);
    if (d < best.distance) {
      best.distance = d;
      best.arc_length = s;
    }
  }
  return best;
}

/// Softmax of -d2 computed directly (no shift), for moderate inputs.
inline std::vector<double> softmax_neg(const std::vector<double> & d2)
{
  double z = 0.0;
  std::vector<double> y(d2.size());
  for (std::size_t i = 0; i < d2.size(); ++i) z += std::exp(-d2[i]);
  for (std::size_t i = 0; i < d2.size(); ++i) y[i] = std::exp(-d2[i]) / z;
  return y;
}

/// Unwrap a heading sequence by accumulating wrapped differences.
inline std::vector<double> unwrap(const std::vector<double> & h, double start = 0.0)
{
  std::vector<double> out;
  double prev_raw = start, acc = start;
  for (double v : h) {
    double d = v - prev_raw;
    while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
    while (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
    acc += d;
    out.push_back(acc);
    prev_raw = v;
  }
  return out;
}

}  // namespace oracle
