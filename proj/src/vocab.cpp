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

#include "hmdp/vocab.hpp"

#include "hmdp/parallel.hpp"
#include "hmdp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace hmdp
{

using nlohmann::json;

FlatTrajectory flatten(const Trajectory & traj)
{
  FlatTrajectory out{};
  double theta = 0.0;
  double prev_heading = 0.0;
  for (std::size_t i = 0; i < kHorizonSteps; ++i) {
    const Pose & p = traj[i];
    theta += geom::angle_diff(p.heading(), prev_heading);
    prev_heading = p.heading();
    out[3 * i] = p.x();
    out[3 * i + 1] = p.y();
    out[3 * i + 2] = theta;
  }
  return out;
}

Trajectory unflatten(const FlatTrajectory & flat)
{
  std::array<Pose, kHorizonSteps> poses;
  for (std::size_t i = 0; i < kHorizonSteps; ++i) {
    poses[i] = Pose(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
  }
  return Trajectory(poses);
}

double squared_distance(const FlatTrajectory & a, const FlatTrajectory & b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < kFlatDim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Vocabulary::Vocabulary(std::vector<Trajectory> trajectories, VocabularyMeta meta)
: trajectories_(std::move(trajectories)), meta_(std::move(meta))
{
  if (trajectories_.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "vocabulary needs k >= 2 trajectories", "k");
  }
  flat_.reserve(trajectories_.size());
  for (const auto & t : trajectories_) {
    flat_.push_back(flatten(t));
  }
  for (std::size_t i = 0; i < flat_.size(); ++i) {
    for (std::size_t j = i + 1; j < flat_.size(); ++j) {
      if (flat_[i] == flat_[j]) {
        throw Error(
          ErrorKind::InvalidArgument, "vocabulary contains identical trajectories",
          std::to_string(i) + "," + std::to_string(j));
      }
    }
  }
}

std::uint64_t Vocabulary::hash() const { return fnv1a64(vocabulary_to_json(*this).dump()); }

namespace
{

using Point = FlatTrajectory;

double distance_bounded(const Point & a, const Point & b, double bound)
{
  double s = 0.0;
  for (std::size_t i = 0; i < kFlatDim; i += 3) {
    const double dx = a[i] - b[i];
    const double dy = a[i + 1] - b[i + 1];
    const double dt = a[i + 2] - b[i + 2];
    s += dx * dx + dy * dy + dt * dt;
    if (s > bound) {
      return s;
    }
  }
  return s;
}

double sse_of(const std::vector<Point> & pts, const std::vector<Point> & centers, const std::vector<std::size_t> & assign)
{
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    total += squared_distance(pts[i], centers[assign[i]]);
  }
  return total;
}

}  // namespace

Vocabulary kmeans(std::span<const Trajectory> trajs, const KMeansOptions & opts)
{
  const std::size_t n = trajs.size();
  const std::size_t k = opts.k;
  if (k < 2) {
    throw Error(ErrorKind::InvalidArgument, "k must be >= 2", "k");
  }
  if (n < k) {
    throw Error(
      ErrorKind::InsufficientData,
      "k-means needs at least k trajectories (" + std::to_string(n) + " < " + std::to_string(k) + ")");
  }
  if (opts.iterations < 1) {
    throw Error(ErrorKind::InvalidArgument, "iterations must be >= 1", "iterations");
  }

  std::array<double, 3> scale{};
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(opts.dim_weights[c] > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "dimension weights must be positive", "dim_weights");
    }
    scale[c] = std::sqrt(opts.dim_weights[c]);
  }

  std::vector<Point> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = flatten(trajs[i]);
    for (std::size_t d = 0; d < kFlatDim; ++d) pts[i][d] *= scale[d % 3];
  }

  // k-means++ seeding.
  Rng rng(opts.seed);
  std::vector<Point> centers;
  centers.reserve(k);
  centers.push_back(pts[rng.uniform_index(n)]);
  std::vector<double> nearest(n);
  parallel_for(n, opts.jobs, [&](std::size_t i) { nearest[i] = squared_distance(pts[i], centers[0]); });
  while (centers.size() < k) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    if (!(total > 0.0)) {
      throw Error(ErrorKind::InsufficientData, "fewer than k distinct trajectories");
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      acc += nearest[i];
      if (nearest[i] > 0.0 && acc > target) {
        pick = i;
        break;
      }
    }
    if (pick == n) {
      // Round-off at the tail: take the last point with positive weight.
      for (std::size_t i = n; i-- > 0;) {
        if (nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pts[pick]);
    const Point & c = centers.back();
    parallel_for(n, opts.jobs, [&](std::size_t i) { nearest[i] = std::min(nearest[i], squared_distance(pts[i], c)); });
  }

  // Lloyd iterations.
  std::vector<std::size_t> assign(n, 0);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> changed(n, 0);
  VocabularyMeta meta;
  meta.source_count = n;
  meta.seed = opts.seed;

  for (std::size_t iter = 0; iter < opts.iterations; ++iter) {
    parallel_for(n, opts.jobs, [&](std::size_t i) {
      // Ties keep the current assignment, so the step never increases SSE.
      std::size_t best = assign[i];
      double best_d = squared_distance(pts[i], centers[best]);
      for (std::size_t c = 0; c < k; ++c) {
        if (c == assign[i]) continue;
        const double d = distance_bounded(pts[i], centers[c], best_d);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed[i] = iter == 0 || best != assign[i];
      assign[i] = best;
      dist[i] = best_d;
    });
    const bool any_change = std::any_of(changed.begin(), changed.end(), [](char c) { return c != 0; });

    // Update step, fixed summation order.
    std::vector<Point> sums(k, Point{});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto & s = sums[assign[i]];
      for (std::size_t d = 0; d < kFlatDim; ++d) s[d] += pts[i][d];
      ++counts[assign[i]];
    }
    std::vector<char> taken(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < kFlatDim; ++d) centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: reseed from the point farthest from its center.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = squared_distance(pts[i], centers[assign[i]]);
          if (!taken[i] && d > far_d) {
            far_d = d;
            far = i;
          }
        }
        taken[far] = 1;
        centers[c] = pts[far];
      }
    }
    meta.sse_history.push_back(sse_of(pts, centers, assign));
    meta.iterations = iter + 1;
    if (!any_change && iter > 0) {
      break;
    }
  }
  meta.final_sse = meta.sse_history.back();

  std::vector<Trajectory> out;
  out.reserve(k);
  for (auto & c : centers) {
    for (std::size_t d = 0; d < kFlatDim; ++d) c[d] /= scale[d % 3];
    out.push_back(unflatten(c));
  }
  return Vocabulary(std::move(out), std::move(meta));
}

std::vector<Trajectory> sample_trajectories(std::size_t count, std::uint64_t seed)
{
  constexpr double v_max = 15.0;
  constexpr int substeps = 10;
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng(mix_seed(seed, n));
    const double v0 = rng.uniform(0.0, v_max);
    const double v1 = rng.bernoulli(0.15) ? 0.0 : rng.uniform(0.0, v_max);
    const double ramp_start = rng.uniform(0.0, 1.5);
    const double ramp_len = rng.uniform(0.5, 4.0);
    const double peak = std::max({v0, v1, 1.0});
    // Lateral acceleration stays below ~4 m/s^2 at the highest speed of the plan.
    const double kappa_cap = std::min(0.2, 4.0 / (peak * peak));

    const double mode = rng.uniform();
    double k0 = 0.0;
    double k1 = 0.0;
    double lc_offset = 0.0;
    double lc_start = 0.0;
    double lc_len = 1.0;
    if (mode < 0.4) {
      const double cap = std::min(kappa_cap, 0.01);
      k0 = rng.uniform(-cap, cap);
      k1 = rng.uniform(-cap, cap);
    } else if (mode < 0.75) {
      k0 = rng.uniform(-kappa_cap, kappa_cap);
      k1 = rng.uniform(-kappa_cap, kappa_cap);
    } else {
      lc_offset = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(2.5, 4.5);
      lc_start = rng.uniform(0.0, 10.0);
      lc_len = std::max(15.0, peak * rng.uniform(2.0, 3.5));
    }

    std::array<Pose, kHorizonSteps> poses;
    double x = 0.0;
    double y = 0.0;
    double th = 0.0;
    double s = 0.0;
    const double h = kStepDt / substeps;
    for (std::size_t step = 0; step < kHorizonSteps; ++step) {
      for (int sub = 0; sub < substeps; ++sub) {
        const double t = (static_cast<double>(step) * substeps + sub + 0.5) * h;
        const double u = std::clamp((t - ramp_start) / ramp_len, 0.0, 1.0);
        const double v = v0 + (v1 - v0) * (u * u * (3.0 - 2.0 * u));
        const double ds = v * h;
        double kappa = k0 + (k1 - k0) * (t / 4.0);
        if (lc_offset != 0.0) {
          // S-curve: k(s) = A sin(2 pi (s - s0) / L) on [s0, s0 + L], net lateral shift = A L^2 / (2 pi).
          const double w = (s - lc_start) / lc_len;
          if (w >= 0.0 && w <= 1.0) {
            const double amp = 2.0 * std::numbers::pi * lc_offset / (lc_len * lc_len);
            kappa = std::clamp(amp * std::sin(2.0 * std::numbers::pi * w), -0.2, 0.2);
          } else {
            kappa = 0.0;
          }
        }
        const double th_mid = th + 0.5 * kappa * ds;
        x += ds * std::cos(th_mid);
        y += ds * std::sin(th_mid);
        th += kappa * ds;
        s += ds;
      }
      poses[step] = Pose(x, y, th);
    }
    out.emplace_back(poses);
  }
  return out;
}

ImitationTarget imitation_targets(const FlatTrajectory & human, std::span<const FlatTrajectory> centers)
{
  ImitationTarget out;
  out.y.resize(centers.size());
  double min_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    out.y[i] = squared_distance(human, centers[i]);
    min_d = std::min(min_d, out.y[i]);
  }
  double total = 0.0;
  for (auto & v : out.y) {
    v = std::exp(-(v - min_d));
    total += v;
  }
  for (auto & v : out.y) v /= total;
  return out;
}

ImitationTarget imitation_targets(const Trajectory & human, const Vocabulary & vocab)
{
  return imitation_targets(flatten(human), vocab.flat());
}

json vocabulary_to_json(const Vocabulary & v)
{
  json trajs = json::array();
  for (const auto & t : v.trajectories()) trajs.push_back(trajectory_to_json(t));
  return {
    {"k", v.size()},
    {"seed", v.meta().seed},
    {"iterations", v.meta().iterations},
    {"final_sse", v.meta().final_sse},
    {"source_count", v.meta().source_count},
    {"sse_history", v.meta().sse_history},
    {"trajectories", trajs},
  };
}

Vocabulary vocabulary_from_json(const json & j)
{
  if (!j.is_object() || !j.contains("trajectories") || !j["trajectories"].is_array()) {
    throw Error(ErrorKind::Schema, "vocabulary needs a 'trajectories' array", "trajectories");
  }
  std::vector<Trajectory> trajs;
  const auto & arr = j["trajectories"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    trajs.push_back(trajectory_from_json(arr[i], "trajectories[" + std::to_string(i) + "]"));
  }
  if (j.contains("k") && j["k"].get<std::size_t>() != trajs.size()) {
    throw Error(ErrorKind::Schema, "vocabulary 'k' does not match trajectory count", "k");
  }
  VocabularyMeta meta;
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.iterations = j.value("iterations", std::size_t{0});
  meta.final_sse = j.value("final_sse", 0.0);
  meta.source_count = j.value("source_count", std::size_t{0});
  meta.sse_history = j.value("sse_history", std::vector<double>{});
  try {
    return Vocabulary(std::move(trajs), std::move(meta));
  } catch (const Error & e) {
    throw Error(ErrorKind::Schema, e.what(), "trajectories");
  }
}

void save_vocabulary(const Vocabulary & v, const std::filesystem::path & path)
{
  write_file_atomic(path, vocabulary_to_json(v).dump() + "\n");
}

Vocabulary load_vocabulary(const std::filesystem::path & path) { return vocabulary_from_json(read_json(path)); }

}  // namespace hmdp
