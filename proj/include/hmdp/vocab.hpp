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

#include "hmdp/scenario.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hmdp
{

/// [x1, y1, θ1, ..., x40, y40, θ40] with headings unwrapped from the ego heading.
using FlatTrajectory = std::array<double, kFlatDim>;

FlatTrajectory flatten(const Trajectory & traj);
/// Inverse of flatten; headings are wrapped back into (-pi, pi].
Trajectory unflatten(const FlatTrajectory & flat);

double squared_distance(const FlatTrajectory & a, const FlatTrajectory & b);

struct VocabularyMeta
{
  std::size_t source_count = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double final_sse = 0.0;
  /// SSE after each Lloyd iteration (post update).
  std::vector<double> sse_history;
};

/// The fixed planning action space: k K-means centers.
class Vocabulary
{
public:
  Vocabulary() = default;
  /// Requires k >= 2 and pairwise distinct trajectories.
  Vocabulary(std::vector<Trajectory> trajectories, VocabularyMeta meta);

  std::size_t size() const { return trajectories_.size(); }
  const std::vector<Trajectory> & trajectories() const { return trajectories_; }
  const Trajectory & operator[](std::size_t i) const { return trajectories_[i]; }
  const std::vector<FlatTrajectory> & flat() const { return flat_; }
  const VocabularyMeta & meta() const { return meta_; }

  /// FNV-1a of the canonical JSON serialization.
  std::uint64_t hash() const;

private:
  std::vector<Trajectory> trajectories_;
  std::vector<FlatTrajectory> flat_;
  VocabularyMeta meta_;
};

struct KMeansOptions
{
  std::size_t k = 256;
  std::size_t iterations = 50;
  std::uint64_t seed = 0;
  /// Per-component weights for (x, y, heading) inside the clustering distance.
  std::array<double, 3> dim_weights{1.0, 1.0, 1.0};
  int jobs = 1;
};

/// Lloyd's algorithm with k-means++ seeding; stops early once no assignment changes.
/// Throws Error(InsufficientData) when fewer than k (distinct) inputs are given.
Vocabulary kmeans(std::span<const Trajectory> trajs, const KMeansOptions & opts);

/// Random kinematically plausible plans: speed 0-15 m/s with a random ramp,
/// curvature |k| <= 0.2 1/m, plus lane-change style S-curves.
std::vector<Trajectory> sample_trajectories(std::size_t count, std::uint64_t seed);

/// Soft imitation target: y_i = softmax(-||human - T_i||^2).
struct ImitationTarget
{
  std::vector<double> y;
};

ImitationTarget imitation_targets(const Trajectory & human, const Vocabulary & vocab);
ImitationTarget imitation_targets(const FlatTrajectory & human, std::span<const FlatTrajectory> centers);

nlohmann::json vocabulary_to_json(const Vocabulary & v);
Vocabulary vocabulary_from_json(const nlohmann::json & j);
void save_vocabulary(const Vocabulary & v, const std::filesystem::path & path);
Vocabulary load_vocabulary(const std::filesystem::path & path);

}  // namespace hmdp
