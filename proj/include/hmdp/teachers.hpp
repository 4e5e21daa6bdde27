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
#include "hmdp/vocab.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hmdp
{

struct ComfortBounds
{
  double lon_accel_min = -4.05;
  double lon_accel_max = 2.40;
  double lat_accel_abs = 4.89;
  double lon_jerk_abs = 4.13;
  double yaw_rate_abs = 0.95;
  double yaw_accel_abs = 1.93;
};

struct TeacherConfig
{
  double tau_d = 0.5;    // DDC and LK distance threshold, m
  double tau_a = 0.7;    // EC acceleration, m/s^2
  double tau_j = 0.5;    // EC jerk, m/s^3
  double tau_yr = 0.1;   // EC yaw rate, rad/s
  double tau_ya = 0.1;   // EC yaw acceleration, rad/s^2
  double ttc_horizon = 1.0;
  double ttc_step = 0.1;
  ComfortBounds comfort;
  double ep_min_ref = 5.0;
  double log_clamp_eps = 1e-6;
  double at_fault_speed = 0.05;
  int dac_edge_samples = 8;

  void validate() const;
  /// Canonical serialization; `hash()` is FNV-1a 64 of its compact dump.
  nlohmann::json to_json() const;
  static TeacherConfig from_json(const nlohmann::json & j);
  std::uint64_t hash() const;
};

/// Column order of a ScoreMatrix.
enum class Metric : std::size_t { NC = 0, DAC, EP, TTC, C, TL, DDC, LK };
inline constexpr std::array<const char *, kNumDistillMetrics> kMetricNames{
  "NC", "DAC", "EP", "TTC", "C", "TL", "DDC", "LK"};
constexpr std::size_t idx(Metric m) { return static_cast<std::size_t>(m); }
/// Accepts the names above (case-insensitive) plus "EC", "PDMS", "EPDMS" where relevant.
std::optional<Metric> metric_from_name(std::string_view name);

struct SubScores
{
  std::optional<double> nc, dac, ep, ttc, c, tl, ddc, lk, ec;

  nlohmann::json to_json() const;
};

double pdms(const SubScores & s);
double epdms(const SubScores & s);

double score_nc(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg);
double score_dac(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg);
double score_ttc(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg);
double score_comfort(const Trajectory & traj, const EgoState & ego, const TeacherConfig & cfg);
double score_tl(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg);
double score_ddc(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg);
double score_lk(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg);

/// Arc-length progress along the route from the origin to the final pose.
double route_progress(const Trajectory & traj, const Scenario & scn);

/// Best progress among candidates passing NC and DAC in this scenario.
struct ProgressReference
{
  double reference = 0.0;
};
ProgressReference progress_reference(
  std::span<const Trajectory> candidates, const Scenario & scn, const TeacherConfig & cfg);

/// Throws Error(NoReference) when `ref` is empty.
double score_ep(
  const Trajectory & traj, const Scenario & scn, const std::optional<ProgressReference> & ref,
  const TeacherConfig & cfg);
double ep_from_progress(double progress, double reference, const TeacherConfig & cfg);

struct EcDiscrepancy
{
  double accel = 0.0;
  double jerk = 0.0;
  double yaw_rate = 0.0;
  double yaw_accel = 0.0;
};

/// RMS differences over the common length of two profiles.
EcDiscrepancy ec_discrepancy(const KinematicProfile & current, const KinematicProfile & preceding);
double ec_decision(const EcDiscrepancy & d, const TeacherConfig & cfg);
/// `prev` is expressed in the preceding frame. Returns 1 when `prev` is absent;
/// throws Error(FrameMismatch) when `prev` is given without a transform.
double score_ec(
  const Trajectory & curr, const std::optional<Trajectory> & prev,
  const std::optional<geom::RigidTransform> & prev_to_curr, const EgoState & ego, const TeacherConfig & cfg);

struct ScoreMatrix
{
  std::string scenario_id;
  std::vector<std::string> metric_names{kMetricNames.begin(), kMetricNames.end()};
  std::size_t rows = 0;
  /// rows x 8, row-major.
  std::vector<double> values;
  std::uint64_t config_hash = 0;
  std::uint64_t vocab_hash = 0;

  double at(std::size_t row, Metric m) const { return values[row * kNumDistillMetrics + idx(m)]; }
  /// Sub-scores of one row (EC left empty).
  SubScores row_scores(std::size_t row) const;
};

/// All eight distillation metrics for every candidate; EP is normalized by the
/// best NC/DAC-passing candidate of this same set.
ScoreMatrix teach_scenario(
  const Scenario & scn, std::span<const Trajectory> candidates, const TeacherConfig & cfg, int jobs = 1);
ScoreMatrix teach_scenario(const Scenario & scn, const Vocabulary & vocab, const TeacherConfig & cfg, int jobs = 1);

/// Every metric for one trajectory, with EP normalized against `vocab` plus the
/// trajectory itself (so it matches appending it to the vocabulary).
SubScores evaluate_trajectory(
  const Trajectory & traj, const Scenario & scn, const Vocabulary & vocab, const TeacherConfig & cfg);

/// Binary little-endian "HMDPSCR1", u32 k, u32 m, k*m float32, plus JSON sidecar
/// at `<path>.json`.
void save_score_matrix(const ScoreMatrix & sm, const std::filesystem::path & path);
ScoreMatrix load_score_matrix(const std::filesystem::path & path);

}  // namespace hmdp
