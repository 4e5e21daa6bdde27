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

// Synthetic non-reactive scenes. A scene is simulated once in a world frame
// over t = -0.5 .. 4.0 s (46 samples at 10 Hz); the preceding frame is the ego
// pose at t = -0.5 s and the current frame the ego pose at t = 0.

#include "hmdp/parallel.hpp"
#include "hmdp/rng.hpp"
#include "hmdp/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hmdp
{

using geom::Polygon;
using geom::Polyline;
using geom::RigidTransform;
using geom::Vec2;

namespace
{

constexpr std::size_t kWorldSamples = 46;  // t = -0.5 .. 4.0
constexpr std::size_t kPrevOffset = 0;
constexpr std::size_t kCurrOffset = 5;
constexpr double kWorldT0 = -0.5;
constexpr double kLaneWidth = 3.5;
constexpr double kShoulder = 0.75;
constexpr double kRoadBack = -40.0;
constexpr double kRoadFront = 180.0;

double world_time(std::size_t j) { return kWorldT0 + kStepDt * static_cast<double>(j); }

/// Reference line: straight for s < curve_start, then a constant-curvature arc.
struct RefLine
{
  double curve_start = 0.0;
  double kappa = 0.0;

  double heading(double s) const { return s < curve_start ? 0.0 : kappa * (s - curve_start); }

  Vec2 point(double s) const
  {
    if (s < curve_start || kappa == 0.0) {
      return {s, 0.0};
    }
    const double u = s - curve_start;
    return {curve_start + std::sin(kappa * u) / kappa, (1.0 - std::cos(kappa * u)) / kappa};
  }

  Vec2 offset_point(double s, double offset) const
  {
    const double h = heading(s);
    return point(s) + offset * Vec2{-std::sin(h), std::cos(h)};
  }

  double sample_step() const { return kappa == 0.0 ? 10.0 : 2.0; }

  std::vector<double> stations(double from, double to) const
  {
    const double ds = sample_step();
    std::vector<double> s;
    for (double v = from; v < to - 1e-9; v += ds) s.push_back(v);
    s.push_back(to);
    return s;
  }

  Polyline lane(double offset, bool forward) const
  {
    std::vector<Vec2> pts;
    for (double s : stations(kRoadBack, kRoadFront)) pts.push_back(offset_point(s, offset));
    if (!forward) std::reverse(pts.begin(), pts.end());
    return Polyline(std::move(pts));
  }

  /// Road surface between two lateral offsets, cut into chunks of about 20 m.
  std::vector<Polygon> corridor(double right, double left, double from, double to) const
  {
    std::vector<Polygon> out;
    const double chunk = 20.0;
    for (double a = from; a < to - 1e-9; a += chunk) {
      const double b = std::min(to, a + chunk);
      const RefLine & self = *this;
      std::vector<double> st;
      const double ds = sample_step();
      for (double v = a; v < b - 1e-9; v += ds) st.push_back(v);
      st.push_back(b);
      std::vector<Vec2> ring;
      for (double s : st) ring.push_back(self.offset_point(s, right));
      for (auto it = st.rbegin(); it != st.rend(); ++it) ring.push_back(self.offset_point(*it, left));
      out.emplace_back(std::move(ring));
    }
    return out;
  }
};

double smoothstep5(double u)
{
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

struct WorldAgent
{
  std::string id;
  double length = 4.5;
  double width = 1.9;
  std::array<Pose, kWorldSamples> poses;
};

struct WorldSignal
{
  Polygon region;
  /// Phases over world time [-0.5, 4.0].
  std::vector<SignalPhase> phases;
  double stop_station = 0.0;  // station of the region's near edge along the route
};

struct World
{
  std::vector<Polyline> lanes;
  Polyline route{{{0.0, 0.0}, {1.0, 0.0}}};
  std::vector<Polygon> drivable;
  std::vector<WorldAgent> agents;
  std::vector<WorldSignal> signals;
  Command command = Command::Follow;
  double v0 = 0.0;
  double v_desired = 10.0;
  double start_station = 0.0;
};

/// Agent moving along `path` from station s0 with speed v, optionally braking
/// at `decel` from time `brake_at` (world time).
WorldAgent make_agent(
  const std::string & id, Rng & rng, const Polyline & path, double s0, double v, double brake_at = 1e9,
  double decel = 0.0)
{
  WorldAgent a;
  a.id = id;
  a.length = rng.uniform(3.8, 5.2);
  a.width = rng.uniform(1.7, 2.1);
  double s = s0;
  double speed = v;
  for (std::size_t j = 0; j < kWorldSamples; ++j) {
    a.poses[j] = path.pose_at(s);
    const double t = world_time(j);
    const double next_speed = t >= brake_at ? std::max(0.0, speed - decel * kStepDt) : speed;
    s += 0.5 * (speed + next_speed) * kStepDt;
    speed = next_speed;
  }
  return a;
}

/// Station of `path` closest to a station on the reference line (paths are
/// parametrized differently when reversed or offset).
double station_near(const Polyline & path, Vec2 p) { return geom::project_onto_polyline(p, path).arc_length; }

struct EgoRollout
{
  std::array<Pose, kWorldSamples> poses;
  std::array<double, kWorldSamples> speed{};
  std::array<double, kWorldSamples> accel{};
};

double idm_accel(double v, double v_des, double gap, double closing, double s0, double headway)
{
  constexpr double a_max = 1.5;
  constexpr double b = 2.0;
  const double free = 1.0 - std::pow(v / std::max(v_des, 0.1), 4.0);
  if (gap >= 1e8) {
    return a_max * free;
  }
  const double s_star = s0 + std::max(0.0, v * headway + v * closing / (2.0 * std::sqrt(a_max * b)));
  const double g = std::max(gap, 0.05);
  return a_max * (free - (s_star / g) * (s_star / g));
}

/// Pure pursuit along the route with IDM speed control against agents on the
/// route and red stop regions.
EgoRollout roll_out_ego(const World & w, const EgoState & dims)
{
  EgoRollout out;
  const Pose start = w.route.pose_at(w.start_station);
  double x = start.x();
  double y = start.y();
  double th = start.heading();
  double v = w.v0;
  constexpr int substeps = 5;
  const double h = kStepDt / substeps;
  constexpr double jerk_limit = 3.0;
  double a_prev = 0.0;

  for (std::size_t j = 0; j < kWorldSamples; ++j) {
    const double t = world_time(j);
    const auto proj = geom::project_onto_polyline({x, y}, w.route);
    const double s_ego = proj.arc_length;

    // Nearest obstacle along the route.
    double gap = 1e9;
    double closing = 0.0;
    double s0 = 2.5;
    for (const auto & ag : w.agents) {
      const Pose & ap = ag.poses[j];
      const auto ap_proj = geom::project_onto_polyline(ap.position(), w.route);
      if (ap_proj.lateral > 2.2 || ap_proj.arc_length <= s_ego) continue;
      const Vec2 route_dir = ap_proj.tangent;
      const double along = geom::dot(ap.direction(), route_dir);
      if (along < 0.3) continue;  // oncoming or crossing
      const double g = ap_proj.arc_length - s_ego - 0.5 * (dims.length + ag.length);
      const Pose & ap_next = ag.poses[std::min(j + 1, kWorldSamples - 1)];
      const double v_agent =
        j + 1 < kWorldSamples ? geom::norm(ap_next.position() - ap.position()) / kStepDt : 0.0;
      if (g < gap) {
        gap = g;
        closing = v - v_agent * along;
        s0 = 2.5;
      }
    }
    for (const auto & sig : w.signals) {
      if (sig.phases.empty()) continue;
      SignalTimeline tl{sig.region, sig.phases};
      if (tl.state_at(t) != SignalState::Red) continue;
      const double front = s_ego + 0.5 * dims.length;
      if (front > sig.stop_station + 0.5) continue;  // already committed
      const double g = sig.stop_station - front;
      if (g < gap) {
        gap = g;
        closing = v;
        s0 = 1.0;
      }
    }
    double a = std::clamp(idm_accel(v, w.v_desired, gap, closing, s0, 1.2), -3.8, 2.0);
    if (j > 0) {
      a = std::clamp(a, a_prev - jerk_limit * kStepDt, a_prev + jerk_limit * kStepDt);
    }
    if (v <= 0.0 && a < 0.0) {
      a = 0.0;
    }
    a_prev = a;

    out.poses[j] = Pose(x, y, th);
    out.speed[j] = v;
    out.accel[j] = a;

    for (int k = 0; k < substeps; ++k) {
      const auto pr = geom::project_onto_polyline({x, y}, w.route);
      const double lookahead = std::clamp(4.0 + 0.6 * v, 5.0, 14.0);
      const Pose target = w.route.pose_at(pr.arc_length + lookahead);
      const Vec2 d = target.position() - Vec2{x, y};
      const double alpha = geom::angle_diff(std::atan2(d.y, d.x), th);
      const double kappa = std::clamp(2.0 * std::sin(alpha) / std::max(geom::norm(d), 1.0), -0.25, 0.25);
      const double v_next = std::max(0.0, v + a * h);
      const double ds = 0.5 * (v + v_next) * h;
      const double th_mid = th + 0.5 * kappa * ds;
      x += ds * std::cos(th_mid);
      y += ds * std::sin(th_mid);
      th = geom::normalize_angle(th + kappa * ds);
      v = v_next;
    }
  }
  return out;
}

/// Ego stays in the drivable area and touches no agent in either frame window.
bool rollout_is_clean(const World & w, const EgoRollout & ego, const EgoState & dims)
{
  for (std::size_t j = 1; j < kWorldSamples; ++j) {
    const auto box = dims.box_at(ego.poses[j]);
    if (!geom::box_in_polygons(box, w.drivable)) return false;
    for (const auto & ag : w.agents) {
      if (geom::obb_intersects(box, geom::OrientedBox::from_dims(ag.poses[j], ag.length + 0.6, ag.width + 0.4))) {
        return false;
      }
    }
  }
  return true;
}

std::vector<Polygon> union_corridor(const RefLine & ref, double right, double left)
{
  return ref.corridor(right - kShoulder, left + kShoulder, kRoadBack, kRoadFront);
}

void add_oncoming(World & w, Rng & rng, const Polyline & lane, const RefLine & ref, int count)
{
  for (int i = 0; i < count; ++i) {
    const double s_ref = rng.uniform(15.0, 110.0);
    const double s0 = station_near(lane, ref.offset_point(s_ref, 0.0));
    w.agents.push_back(make_agent("oncoming_" + std::to_string(i), rng, lane, s0, rng.uniform(5.0, 13.0)));
  }
}

World build_straight_or_curved(Rng & rng, bool curved, bool no_agents)
{
  World w;
  RefLine ref;
  if (curved) {
    const double mag = rng.uniform(0.006, 0.02);
    ref.kappa = rng.bernoulli(0.5) ? mag : -mag;
    ref.curve_start = rng.uniform(0.0, 25.0);
    if (std::abs(ref.kappa) > 0.012) {
      w.command = ref.kappa > 0.0 ? Command::TurnLeft : Command::TurnRight;
    }
  }
  // Ego lane at offset 0, same-direction lane on the right, oncoming lane on the left.
  const Polyline ego_lane = ref.lane(0.0, true);
  const Polyline right_lane = ref.lane(-kLaneWidth, true);
  const Polyline oncoming = ref.lane(kLaneWidth, false);
  w.lanes = {ego_lane, right_lane, oncoming};
  w.route = ego_lane;
  w.drivable = union_corridor(ref, -1.5 * kLaneWidth, 1.5 * kLaneWidth);
  w.v_desired = rng.uniform(7.0, 14.0);
  w.v0 = rng.uniform(0.4, 1.1) * w.v_desired;
  w.start_station = station_near(ego_lane, ref.point(0.0));

  if (no_agents) return w;

  if (rng.bernoulli(0.75)) {
    const double gap = rng.uniform(10.0, 45.0);
    const bool stopped = rng.bernoulli(0.25);
    const double v_lead = stopped ? 0.0 : rng.uniform(0.3, 1.0) * w.v_desired;
    const bool brakes = !stopped && rng.bernoulli(0.3);
    w.agents.push_back(make_agent(
      "lead", rng, ego_lane, w.start_station + gap + 4.6, v_lead, brakes ? rng.uniform(0.0, 2.5) : 1e9,
      rng.uniform(1.0, 3.0)));
  }
  const int n_right = static_cast<int>(rng.uniform_index(3));
  double s_next = rng.uniform(-15.0, 10.0);
  for (int i = 0; i < n_right; ++i) {
    w.agents.push_back(make_agent(
      "right_" + std::to_string(i), rng, right_lane, station_near(right_lane, ref.point(s_next)),
      rng.uniform(4.0, 13.0)));
    s_next += rng.uniform(14.0, 35.0);
  }
  add_oncoming(w, rng, oncoming, ref, static_cast<int>(rng.uniform_index(3)));
  return w;
}

World build_intersection(Rng & rng, bool no_agents)
{
  World w;
  RefLine ref;
  const Polyline ego_lane = ref.lane(0.0, true);
  const Polyline right_lane = ref.lane(-kLaneWidth, true);
  const Polyline oncoming = ref.lane(kLaneWidth, false);
  w.route = ego_lane;
  w.v_desired = rng.uniform(7.0, 13.0);
  w.v0 = rng.uniform(0.3, 1.0) * w.v_desired;
  w.start_station = station_near(ego_lane, ref.point(0.0));

  // Crosswalk (stop region) ahead of the crossing road.
  const double min_cw = 0.5 * 4.6 + w.v0 * 1.5 + w.v0 * w.v0 / (2.0 * 1.2) + 6.0;
  const double s_cw = rng.uniform(std::max(12.0, min_cw), std::max(14.0, min_cw) + 30.0);
  const double cw_depth = 3.0;
  const double cross_half = 7.0;
  const double s_cross = s_cw + cw_depth + cross_half;
  const double road_right = -1.5 * kLaneWidth - kShoulder;
  const double road_left = 1.5 * kLaneWidth + kShoulder;

  Polygon region({{s_cw, road_right}, {s_cw + cw_depth, road_right}, {s_cw + cw_depth, road_left},
                  {s_cw, road_left}});

  // Cross road lanes (one per direction) and its surface.
  const Polyline cross_up({{s_cross + 0.5 * kLaneWidth, -60.0}, {s_cross + 0.5 * kLaneWidth, 60.0}});
  const Polyline cross_down({{s_cross - 0.5 * kLaneWidth, 60.0}, {s_cross - 0.5 * kLaneWidth, -60.0}});
  w.lanes = {ego_lane, right_lane, oncoming, cross_up, cross_down};
  w.drivable = union_corridor(ref, -1.5 * kLaneWidth, 1.5 * kLaneWidth);
  w.drivable.push_back(Polygon({{s_cross - cross_half, -60.0}, {s_cross + cross_half, -60.0},
                                {s_cross + cross_half, 60.0}, {s_cross - cross_half, 60.0}}));

  WorldSignal sig{region, {}, s_cw};
  const double u = rng.uniform();
  enum { AllGreen, AllRed, RedThenGreen } kind = u < 0.3 ? AllGreen : (u < 0.65 ? AllRed : RedThenGreen);
  if (kind == AllGreen) {
    sig.phases = {{kWorldT0, 4.0, SignalState::Green}};
  } else if (kind == AllRed) {
    sig.phases = {{kWorldT0, 4.0, SignalState::Red}};
  } else {
    const double t_green = std::round(rng.uniform(0.5, 3.5) * 10.0) / 10.0;
    sig.phases = {{kWorldT0, t_green, SignalState::Red}, {t_green, 4.0, SignalState::Green}};
  }
  w.signals.push_back(sig);

  if (no_agents) return w;

  if (kind == AllGreen && rng.bernoulli(0.6)) {
    const double gap = rng.uniform(12.0, 35.0);
    w.agents.push_back(make_agent(
      "lead", rng, ego_lane, w.start_station + gap + 4.6, rng.uniform(0.5, 1.0) * w.v_desired));
  }
  if (kind == AllRed) {
    const int n_cross = 1 + static_cast<int>(rng.uniform_index(2));
    for (int i = 0; i < n_cross; ++i) {
      const bool up = rng.bernoulli(0.5);
      const Polyline & lane = up ? cross_up : cross_down;
      w.agents.push_back(make_agent(
        "cross_" + std::to_string(i), rng, lane, rng.uniform(20.0, 55.0), rng.uniform(5.0, 11.0)));
    }
  }
  add_oncoming(w, rng, oncoming, ref, static_cast<int>(rng.uniform_index(2)));
  return w;
}

World build_lane_change(Rng & rng, bool no_agents)
{
  World w;
  RefLine ref;
  const bool left = rng.bernoulli(0.5);
  const double target = left ? kLaneWidth : -kLaneWidth;
  w.command = left ? Command::LaneChangeLeft : Command::LaneChangeRight;
  const Polyline ego_lane = ref.lane(0.0, true);
  const Polyline target_lane = ref.lane(target, true);
  w.lanes = {ego_lane, target_lane};
  w.drivable = union_corridor(ref, std::min(0.0, target) - 0.5 * kLaneWidth, std::max(0.0, target) + 0.5 * kLaneWidth);
  w.v_desired = rng.uniform(8.0, 14.0);
  w.v0 = rng.uniform(0.6, 1.0) * w.v_desired;

  const double s_begin = rng.uniform(0.0, 12.0);
  const double length = std::max(30.0, 3.2 * w.v0) * rng.uniform(0.9, 1.3);
  std::vector<Vec2> pts;
  for (double s = kRoadBack; s <= kRoadFront + 1e-9; s += 2.0) {
    pts.push_back(ref.offset_point(s, target * smoothstep5((s - s_begin) / length)));
  }
  w.route = Polyline(std::move(pts));
  w.start_station = station_near(w.route, ref.point(0.0));

  if (no_agents) return w;

  if (rng.bernoulli(0.6)) {
    const double gap = rng.uniform(22.0, 45.0);
    w.agents.push_back(make_agent(
      "lead", rng, ego_lane, station_near(ego_lane, ref.point(0.0)) + gap + 4.6,
      rng.uniform(0.4, 0.8) * w.v_desired));
  }
  if (rng.bernoulli(0.5)) {
    const double ahead = rng.uniform(45.0, 70.0);
    w.agents.push_back(make_agent(
      "target_ahead", rng, target_lane, station_near(target_lane, ref.point(ahead)),
      w.v_desired * rng.uniform(1.0, 1.2)));
  }
  if (rng.bernoulli(0.3)) {
    const double behind = rng.uniform(18.0, 30.0);
    w.agents.push_back(make_agent(
      "target_behind", rng, target_lane, station_near(target_lane, ref.point(-behind)),
      w.v0 * rng.uniform(0.5, 0.8)));
  }
  return w;
}

World build_world(Rng & rng, Template tmpl, bool no_agents)
{
  switch (tmpl) {
    case Template::StraightRoad: return build_straight_or_curved(rng, false, no_agents);
    case Template::CurvedRoad: return build_straight_or_curved(rng, true, no_agents);
    case Template::SignalizedIntersection: return build_intersection(rng, no_agents);
    case Template::LaneChange: return build_lane_change(rng, no_agents);
  }
  return build_straight_or_curved(rng, false, no_agents);
}

std::vector<SignalPhase> frame_phases(const std::vector<SignalPhase> & world, double frame_t0)
{
  std::vector<SignalPhase> out;
  for (const auto & ph : world) {
    const double a = std::clamp(ph.start - frame_t0, 0.0, 4.0);
    const double b = std::clamp(ph.end - frame_t0, 0.0, 4.0);
    if (b - a > 1e-9) {
      if (!out.empty() && out.back().state == ph.state) {
        out.back().end = b;
      } else {
        out.push_back({a, b, ph.state});
      }
    }
  }
  out.front().start = 0.0;
  out.back().end = 4.0;
  return out;
}

Scenario make_frame(
  const World & w, const EgoRollout & ego, std::size_t offset, const std::string & id,
  const EgoState & dims)
{
  const RigidTransform tf = RigidTransform::to_local(ego.poses[offset]);
  Scenario s;
  s.id = id;
  for (const auto & l : w.lanes) s.lanes.push_back(l.transformed(tf));
  s.route = w.route.transformed(tf);
  for (const auto & p : w.drivable) s.drivable.push_back(p.transformed(tf));
  for (const auto & ag : w.agents) {
    AgentTrack track;
    track.id = ag.id;
    track.length = ag.length;
    track.width = ag.width;
    for (std::size_t i = 0; i < kAgentSamples; ++i) {
      track.poses.push_back(tf.apply(ag.poses[offset + i]));
    }
    s.agents.push_back(std::move(track));
  }
  for (const auto & sig : w.signals) {
    s.signals.push_back(SignalTimeline{sig.region.transformed(tf), frame_phases(sig.phases, world_time(offset))});
  }
  s.ego = dims;
  s.ego.velocity = ego.speed[offset];
  s.ego.acceleration = ego.accel[offset];
  s.ego.command = w.command;
  std::array<Pose, kHorizonSteps> human;
  for (std::size_t i = 0; i < kHorizonSteps; ++i) {
    human[i] = tf.apply(ego.poses[offset + 1 + i]);
  }
  s.human = Trajectory(human);
  return s;
}

std::string pair_id(std::uint64_t seed, std::size_t index)
{
  std::ostringstream ss;
  ss << "s" << seed << "_";
  ss.width(5);
  ss.fill('0');
  ss << index;
  return ss.str();
}

}  // namespace

std::string_view to_string(Template t)
{
  switch (t) {
    case Template::StraightRoad: return "StraightRoad";
    case Template::CurvedRoad: return "CurvedRoad";
    case Template::SignalizedIntersection: return "SignalizedIntersection";
    case Template::LaneChange: return "LaneChange";
  }
  return "StraightRoad";
}

TemplateMix TemplateMix::only(Template t)
{
  TemplateMix m;
  m.weights.fill(0.0);
  m.weights[static_cast<std::size_t>(t)] = 1.0;
  return m;
}

TemplateMix TemplateMix::parse(std::string_view text)
{
  for (std::size_t i = 0; i < kTemplateCount; ++i) {
    if (text == to_string(static_cast<Template>(i))) {
      return only(static_cast<Template>(i));
    }
  }
  if (text == "uniform") {
    return uniform();
  }
  TemplateMix m;
  std::vector<double> values;
  std::string token;
  std::istringstream in{std::string(text)};
  while (std::getline(in, token, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception &) {
      throw Error(ErrorKind::InvalidTemplateMix, "template mix entry is not a number: '" + token + "'", "mix");
    }
  }
  if (values.size() != kTemplateCount) {
    throw Error(ErrorKind::InvalidTemplateMix, "template mix needs 4 comma-separated weights", "mix");
  }
  std::copy(values.begin(), values.end(), m.weights.begin());
  m.validate();
  return m;
}

void TemplateMix::validate() const
{
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorKind::InvalidTemplateMix, "template weights must be finite and non-negative", "mix");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorKind::InvalidTemplateMix, "template weights must sum to 1", "mix");
  }
}

FramePair generate_pair(std::uint64_t seed, std::size_t index, Template tmpl, bool no_agents)
{
  const EgoState dims;
  Rng rng(mix_seed(seed, index));
  World world = build_world(rng, tmpl, no_agents);
  EgoRollout ego = roll_out_ego(world, dims);
  // Rare conflicts (an agent cutting through the ego path) are redrawn.
  for (int attempt = 0; attempt < 8 && !rollout_is_clean(world, ego, dims); ++attempt) {
    world = build_world(rng, tmpl, no_agents);
    ego = roll_out_ego(world, dims);
  }

  const std::string base = pair_id(seed, index);
  FramePair pair{
    make_frame(world, ego, kPrevOffset, base + "_prev", dims),
    make_frame(world, ego, kCurrOffset, base + "_curr", dims),
    {},
  };
  pair.curr.preceding_id = pair.prev.id;
  const RigidTransform world_to_curr = RigidTransform::to_local(ego.poses[kCurrOffset]);
  const RigidTransform prev_to_world{ego.poses[kPrevOffset].x(), ego.poses[kPrevOffset].y(), ego.poses[kPrevOffset].heading()};
  pair.prev_to_curr = world_to_curr.compose(prev_to_world);
  pair.prev.validate();
  pair.curr.validate();
  return pair;
}

std::vector<FramePair> generate_scenarios(
  std::size_t count, std::uint64_t seed, const TemplateMix & mix, const GenerateOptions & opts)
{
  if (count < 1) {
    throw Error(ErrorKind::InvalidArgument, "scenario count must be >= 1", "count");
  }
  mix.validate();
  std::vector<FramePair> out(count);
  parallel_for(count, opts.jobs, [&](std::size_t i) {
    // Template choice uses its own stream so it does not perturb the scene draw.
    Rng pick(mix_seed(seed ^ 0x7E3A11C0FFEEULL, i));
    const double u = pick.uniform();
    double acc = 0.0;
    std::size_t t = kTemplateCount - 1;
    for (std::size_t k = 0; k < kTemplateCount; ++k) {
      acc += mix.weights[k];
      if (u < acc && mix.weights[k] > 0.0) {
        t = k;
        break;
      }
    }
    while (mix.weights[t] <= 0.0 && t > 0) --t;
    out[i] = generate_pair(seed, i, static_cast<Template>(t), opts.no_agents);
  });
  return out;
}

}  // namespace hmdp
