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

#include "hmdp/common.hpp"
#include "hmdp/geom.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hmdp
{

using geom::Pose;

/// 40 poses at t = 0.1 .. 4.0 s in the ego frame of the scenario.
class Trajectory
{
public:
  Trajectory() = default;
  explicit Trajectory(const std::array<Pose, kHorizonSteps> & poses);

  /// Throws Error(Schema) unless exactly 40 finite poses are given.
  static Trajectory from_poses(std::span<const Pose> poses);

  const std::array<Pose, kHorizonSteps> & poses() const { return poses_; }
  const Pose & operator[](std::size_t i) const { return poses_[i]; }
  const Pose & back() const { return poses_.back(); }

  Trajectory transformed(const geom::RigidTransform & tf) const;

  friend bool operator==(const Trajectory &, const Trajectory &) = default;

private:
  std::array<Pose, kHorizonSteps> poses_{};
};

enum class Command { Follow, TurnLeft, TurnRight, LaneChangeLeft, LaneChangeRight };

std::string_view to_string(Command c);
Command command_from_string(std::string_view s);

struct EgoState
{
  /// Identity in a scenario's own frame; moved only by Scenario::transformed.
  Pose pose;
  double velocity = 0.0;
  double acceleration = 0.0;
  Command command = Command::Follow;
  double length = 4.6;
  double width = 1.9;

  geom::OrientedBox box_at(const Pose & pose) const
  {
    return geom::OrientedBox::from_dims(pose, length, width);
  }

  friend bool operator==(const EgoState &, const EgoState &) = default;
};

struct AgentTrack
{
  std::string id;
  double length = 4.5;
  double width = 1.9;
  /// 41 poses, t = 0 .. 4 s.
  std::vector<Pose> poses;

  /// Pose at sample index i, held at the final pose beyond the recorded window.
  const Pose & pose_at_index(std::size_t i) const { return poses[std::min(i, poses.size() - 1)]; }
  geom::OrientedBox box_at_index(std::size_t i) const
  {
    return geom::OrientedBox::from_dims(pose_at_index(i), length, width);
  }

  friend bool operator==(const AgentTrack &, const AgentTrack &) = default;
};

enum class SignalState { Red, Green };

struct SignalPhase
{
  double start = 0.0;
  double end = 0.0;
  SignalState state = SignalState::Green;

  friend bool operator==(const SignalPhase &, const SignalPhase &) = default;
};

struct SignalTimeline
{
  geom::Polygon region;
  std::vector<SignalPhase> phases;

  /// Phase intervals are half-open [start, end) except the last, which includes end.
  SignalState state_at(double t) const;

  friend bool operator==(const SignalTimeline &, const SignalTimeline &) = default;
};

struct Scenario
{
  std::string id;
  std::vector<geom::Polyline> lanes;
  geom::Polyline route{{{0.0, 0.0}, {1.0, 0.0}}};
  std::vector<geom::Polygon> drivable;
  std::vector<AgentTrack> agents;
  std::vector<SignalTimeline> signals;
  EgoState ego;
  Trajectory human;
  std::optional<std::string> preceding_id;

  /// Throws Error(Schema) with a field path when an invariant is violated.
  void validate() const;

  /// Whole scene expressed in another frame (used to bring a preceding frame
  /// into the current one).
  Scenario transformed(const geom::RigidTransform & tf) const;

  friend bool operator==(const Scenario &, const Scenario &) = default;
};

/// Consecutive frames 0.5 s apart. `prev_to_curr` maps preceding-frame
/// coordinates into the current frame.
struct FramePair
{
  Scenario prev;
  Scenario curr;
  geom::RigidTransform prev_to_curr;
};

struct KinematicProfile
{
  std::vector<double> speed;
  std::vector<double> lon_accel;
  std::vector<double> lon_jerk;
  std::vector<double> yaw_rate;
  std::vector<double> yaw_accel;
  std::vector<double> lat_accel;
};

/// Finite-difference kinematics of `poses` with `start` prepended as the pose at t = 0.
KinematicProfile derive_kinematics(std::span<const Pose> poses, const Pose & start, double dt = kStepDt);

/// Trajectory kinematics starting from the ego pose (the frame origin).
KinematicProfile derive_kinematics(const Trajectory & traj, const EgoState & initial, double dt = kStepDt);

enum class Template { StraightRoad, CurvedRoad, SignalizedIntersection, LaneChange };
inline constexpr std::size_t kTemplateCount = 4;
std::string_view to_string(Template t);

/// Template weights in the order StraightRoad, CurvedRoad, SignalizedIntersection, LaneChange.
struct TemplateMix
{
  std::array<double, kTemplateCount> weights{0.25, 0.25, 0.25, 0.25};

  static TemplateMix uniform() { return {}; }
  static TemplateMix only(Template t);
  /// "a,b,c,d" or a single template name.
  static TemplateMix parse(std::string_view text);
  void validate() const;
};

struct GenerateOptions
{
  /// Force a template's agents away; used by tests that need hazard-free scenes.
  bool no_agents = false;
  int jobs = 1;
};

/// Deterministic in `seed`; scenario i draws from its own stream mix_seed(seed, i).
std::vector<FramePair> generate_scenarios(
  std::size_t count, std::uint64_t seed, const TemplateMix & mix, const GenerateOptions & opts = {});

/// Single pair for a fixed template (exposed for tests and the python module).
FramePair generate_pair(std::uint64_t seed, std::size_t index, Template tmpl, bool no_agents = false);

// ---- serialization ---------------------------------------------------------

nlohmann::json scenario_to_json(const Scenario & s);
/// Throws Error(Schema) naming the offending field.
Scenario scenario_from_json(const nlohmann::json & j);

nlohmann::json trajectory_to_json(const Trajectory & t);
Trajectory trajectory_from_json(const nlohmann::json & j, const std::string & path = "trajectory");

void save_scenario(const Scenario & s, const std::filesystem::path & path);
Scenario load_scenario(const std::filesystem::path & path);

struct PairRecord
{
  std::filesystem::path prev;
  std::filesystem::path curr;
  geom::RigidTransform transform;
};

/// Writes <dir>/scenarios/<id>.json for both frames and returns manifest records
/// with paths relative to `dir`.
std::vector<PairRecord> save_pairs(const std::vector<FramePair> & pairs, const std::filesystem::path & dir);
void save_manifest(const std::vector<PairRecord> & records, const std::filesystem::path & path);
/// Paths in the returned records are resolved against the manifest directory.
std::vector<PairRecord> load_manifest(const std::filesystem::path & path);
std::vector<FramePair> load_pairs(const std::filesystem::path & manifest);

/// Reads a whole file; throws Error(Io).
std::string read_file(const std::filesystem::path & path);
/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path & path, const std::string & content);
nlohmann::json read_json(const std::filesystem::path & path);

}  // namespace hmdp
