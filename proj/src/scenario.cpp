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

#include "hmdp/scenario.hpp"

#include <cmath>
#include <string>

namespace hmdp
{

namespace
{

bool finite_pose(const Pose & p)
{
  return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.heading());
}

}  // namespace

Trajectory::Trajectory(const std::array<Pose, kHorizonSteps> & poses) : poses_(poses)
{
  for (const auto & p : poses_) {
    if (!finite_pose(p)) {
      throw Error(ErrorKind::Schema, "trajectory pose is not finite");
    }
  }
}

Trajectory Trajectory::from_poses(std::span<const Pose> poses)
{
  if (poses.size() != kHorizonSteps) {
    throw Error(
      ErrorKind::Schema,
      "trajectory must have exactly 40 poses, got " + std::to_string(poses.size()));
  }
  std::array<Pose, kHorizonSteps> arr;
  std::copy(poses.begin(), poses.end(), arr.begin());
  return Trajectory(arr);
}

Trajectory Trajectory::transformed(const geom::RigidTransform & tf) const
{
  std::array<Pose, kHorizonSteps> out;
  for (std::size_t i = 0; i < kHorizonSteps; ++i) {
    out[i] = tf.apply(poses_[i]);
  }
  return Trajectory(out);
}

std::string_view to_string(Command c)
{
  switch (c) {
    case Command::Follow: return "Follow";
    case Command::TurnLeft: return "TurnLeft";
    case Command::TurnRight: return "TurnRight";
    case Command::LaneChangeLeft: return "LaneChangeLeft";
    case Command::LaneChangeRight: return "LaneChangeRight";
  }
  return "Follow";
}

Command command_from_string(std::string_view s)
{
  for (auto c : {Command::Follow, Command::TurnLeft, Command::TurnRight, Command::LaneChangeLeft,
                 Command::LaneChangeRight}) {
    if (to_string(c) == s) {
      return c;
    }
  }
  throw Error(ErrorKind::Schema, "unknown command '" + std::string(s) + "'", "ego.command");
}

SignalState SignalTimeline::state_at(double t) const
{
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const auto & ph = phases[i];
    const bool last = i + 1 == phases.size();
    if (t >= ph.start && (t < ph.end || (last && t <= ph.end))) {
      return ph.state;
    }
  }
  return phases.empty() ? SignalState::Green : phases.back().state;
}

void Scenario::validate() const
{
  if (id.empty()) {
    throw Error(ErrorKind::Schema, "scenario id is empty", "id");
  }
  if (!(route.length() > 0.0)) {
    throw Error(ErrorKind::Schema, "route has zero length", "route");
  }
  if (drivable.empty()) {
    throw Error(ErrorKind::Schema, "drivable area is empty", "drivable");
  }
  if (!(ego.velocity >= 0.0) || !std::isfinite(ego.velocity)) {
    throw Error(ErrorKind::Schema, "ego velocity must be >= 0", "ego.velocity");
  }
  if (!std::isfinite(ego.pose.x()) || !std::isfinite(ego.pose.y()) || !std::isfinite(ego.pose.heading())) {
    throw Error(ErrorKind::Schema, "ego pose is not finite", "ego.pose");
  }
  if (!std::isfinite(ego.acceleration)) {
    throw Error(ErrorKind::Schema, "ego acceleration is not finite", "ego.acceleration");
  }
  if (!(ego.length > 0.0) || !(ego.width > 0.0)) {
    throw Error(ErrorKind::Schema, "ego dimensions must be positive", "ego.length");
  }
  for (std::size_t a = 0; a < agents.size(); ++a) {
    const auto & ag = agents[a];
    const std::string path = "agents[" + std::to_string(a) + "]";
    if (ag.poses.size() != kAgentSamples) {
      throw Error(
        ErrorKind::Schema,
        "agent track must have exactly 41 poses, got " + std::to_string(ag.poses.size()),
        path + ".poses");
    }
    if (!(ag.length > 0.0) || !(ag.width > 0.0)) {
      throw Error(ErrorKind::Schema, "agent dimensions must be positive", path + ".length");
    }
    for (std::size_t i = 0; i < ag.poses.size(); ++i) {
      if (!finite_pose(ag.poses[i])) {
        throw Error(ErrorKind::Schema, "agent pose is not finite", path + ".poses");
      }
      if (i > 0 && geom::norm(ag.poses[i].position() - ag.poses[i - 1].position()) >= 5.0) {
        throw Error(ErrorKind::Schema, "agent displacement >= 5 m between samples", path + ".poses");
      }
    }
  }
  for (std::size_t s = 0; s < signals.size(); ++s) {
    const auto & ph = signals[s].phases;
    const std::string path = "signals[" + std::to_string(s) + "].phases";
    if (ph.empty()) {
      throw Error(ErrorKind::Schema, "signal has no phases", path);
    }
    constexpr double tol = 1e-9;
    if (std::abs(ph.front().start) > tol || std::abs(ph.back().end - 4.0) > tol) {
      throw Error(ErrorKind::Schema, "signal phases must cover [0, 4] s", path);
    }
    for (std::size_t i = 0; i < ph.size(); ++i) {
      if (!(ph[i].end > ph[i].start)) {
        throw Error(ErrorKind::Schema, "signal phase has non-positive duration", path);
      }
      if (i > 0 && std::abs(ph[i].start - ph[i - 1].end) > tol) {
        throw Error(ErrorKind::Schema, "signal phases are not contiguous", path);
      }
    }
  }
}

Scenario Scenario::transformed(const geom::RigidTransform & tf) const
{
  Scenario out = *this;
  out.lanes.clear();
  for (const auto & l : lanes) {
    out.lanes.push_back(l.transformed(tf));
  }
  out.route = route.transformed(tf);
  out.drivable.clear();
  for (const auto & p : drivable) {
    out.drivable.push_back(p.transformed(tf));
  }
  for (auto & ag : out.agents) {
    for (auto & p : ag.poses) {
      p = tf.apply(p);
    }
  }
  for (auto & sig : out.signals) {
    sig.region = sig.region.transformed(tf);
  }
  out.human = human.transformed(tf);
  out.ego.pose = tf.apply(ego.pose);
  return out;
}

KinematicProfile derive_kinematics(std::span<const Pose> poses, const Pose & start, double dt)
{
  KinematicProfile k;
  const std::size_t n = poses.size();
  k.speed.resize(n);
  k.yaw_rate.resize(n);
  const Pose * prev = &start;
  for (std::size_t i = 0; i < n; ++i) {
    const Pose & cur = poses[i];
    k.speed[i] = geom::norm(cur.position() - prev->position()) / dt;
    k.yaw_rate[i] = geom::angle_diff(cur.heading(), prev->heading()) / dt;
    prev = &cur;
  }
  auto diff = [dt](const std::vector<double> & v) {
    std::vector<double> d;
    if (v.size() > 1) {
      d.resize(v.size() - 1);
      for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        d[i] = (v[i + 1] - v[i]) / dt;
      }
    }
    return d;
  };
  k.lon_accel = diff(k.speed);
  k.lon_jerk = diff(k.lon_accel);
  k.yaw_accel = diff(k.yaw_rate);
  k.lat_accel.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    k.lat_accel[i] = k.speed[i] * k.yaw_rate[i];
  }
  return k;
}

KinematicProfile derive_kinematics(const Trajectory & traj, const EgoState & initial, double dt)
{
  return derive_kinematics(std::span<const Pose>(traj.poses()), initial.pose, dt);
}

}  // namespace hmdp
