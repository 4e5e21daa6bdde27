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

#include "hmdp/teachers.hpp"

#include "hmdp/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

namespace hmdp
{

using geom::OrientedBox;
using geom::Vec2;
using nlohmann::json;

// ---- config ----------------------------------------------------------------

void TeacherConfig::validate() const
{
  const double positives[] = {tau_d, tau_a, tau_j, tau_yr, tau_ya, ttc_horizon, ttc_step, ep_min_ref,
                              log_clamp_eps, comfort.lat_accel_abs, comfort.lon_jerk_abs,
                              comfort.yaw_rate_abs, comfort.yaw_accel_abs};
  for (double v : positives) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::InvalidArgument, "teacher thresholds must be positive", "config");
    }
  }
  if (!(comfort.lon_accel_min < 0.0 && comfort.lon_accel_max > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "lon_accel bounds must straddle zero", "config.comfort");
  }
  if (dac_edge_samples < 0) {
    throw Error(ErrorKind::InvalidArgument, "dac_edge_samples must be >= 0", "config");
  }
}

json TeacherConfig::to_json() const
{
  return {
    {"tau_d", tau_d},
    {"tau_a", tau_a},
    {"tau_j", tau_j},
    {"tau_yr", tau_yr},
    {"tau_ya", tau_ya},
    {"ttc_horizon", ttc_horizon},
    {"ttc_step", ttc_step},
    {"comfort",
     {{"lon_accel_min", comfort.lon_accel_min},
      {"lon_accel_max", comfort.lon_accel_max},
      {"lat_accel_abs", comfort.lat_accel_abs},
      {"lon_jerk_abs", comfort.lon_jerk_abs},
      {"yaw_rate_abs", comfort.yaw_rate_abs},
      {"yaw_accel_abs", comfort.yaw_accel_abs}}},
    {"ep_min_ref", ep_min_ref},
    {"log_clamp_eps", log_clamp_eps},
    {"at_fault_speed", at_fault_speed},
    {"dac_edge_samples", dac_edge_samples},
  };
}

TeacherConfig TeacherConfig::from_json(const json & j)
{
  if (!j.is_object()) {
    throw Error(ErrorKind::Schema, "teacher config must be an object", "config");
  }
  TeacherConfig c;
  auto get = [&](const char * key, double & dst) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) throw Error(ErrorKind::Schema, std::string("expected a number at '") + key + "'", key);
      dst = it->get<double>();
    }
  };
  get("tau_d", c.tau_d);
  get("tau_a", c.tau_a);
  get("tau_j", c.tau_j);
  get("tau_yr", c.tau_yr);
  get("tau_ya", c.tau_ya);
  get("ttc_horizon", c.ttc_horizon);
  get("ttc_step", c.ttc_step);
  get("ep_min_ref", c.ep_min_ref);
  get("log_clamp_eps", c.log_clamp_eps);
  get("at_fault_speed", c.at_fault_speed);
  if (auto it = j.find("dac_edge_samples"); it != j.end()) c.dac_edge_samples = it->get<int>();
  if (auto it = j.find("comfort"); it != j.end()) {
    const json & cj = *it;
    auto getc = [&](const char * key, double & dst) {
      if (auto jt = cj.find(key); jt != cj.end()) dst = jt->get<double>();
    };
    getc("lon_accel_min", c.comfort.lon_accel_min);
    getc("lon_accel_max", c.comfort.lon_accel_max);
    getc("lat_accel_abs", c.comfort.lat_accel_abs);
    getc("lon_jerk_abs", c.comfort.lon_jerk_abs);
    getc("yaw_rate_abs", c.comfort.yaw_rate_abs);
    getc("yaw_accel_abs", c.comfort.yaw_accel_abs);
  }
  c.validate();
  return c;
}

std::uint64_t TeacherConfig::hash() const { return fnv1a64(to_json().dump()); }

std::optional<Metric> metric_from_name(std::string_view name)
{
  std::string upper(name);
  for (auto & ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    if (upper == kMetricNames[i]) return static_cast<Metric>(i);
  }
  return std::nullopt;
}

json SubScores::to_json() const
{
  json j = json::object();
  auto put = [&](const char * key, const std::optional<double> & v) { j[key] = v ? json(*v) : json(nullptr); };
  put("NC", nc);
  put("DAC", dac);
  put("EP", ep);
  put("TTC", ttc);
  put("C", c);
  put("TL", tl);
  put("DDC", ddc);
  put("LK", lk);
  put("EC", ec);
  return j;
}

// ---- aggregates ------------------------------------------------------------

namespace
{

double need(const std::optional<double> & v, const char * name)
{
  if (!v) {
    throw Error(ErrorKind::MissingSubscore, std::string("missing sub-score ") + name, name);
  }
  return *v;
}

}  // namespace

double pdms(const SubScores & s)
{
  const double penalties = need(s.nc, "NC") * need(s.dac, "DAC");
  return penalties * (5.0 * need(s.ttc, "TTC") + 2.0 * need(s.c, "C") + 5.0 * need(s.ep, "EP")) / 12.0;
}

double epdms(const SubScores & s)
{
  const double penalties = need(s.nc, "NC") * need(s.dac, "DAC") * need(s.ddc, "DDC") * need(s.tl, "TL");
  const double weighted = 5.0 * need(s.ttc, "TTC") + 2.0 * need(s.c, "C") + 5.0 * need(s.ep, "EP") +
                          5.0 * need(s.lk, "LK") + 5.0 * need(s.ec, "EC");
  return penalties * weighted / 22.0;
}

// ---- per-metric scorers ----------------------------------------------------

namespace
{

/// Per-trajectory quantities shared by several metrics.
struct TrajContext
{
  const Trajectory & traj;
  KinematicProfile kin;

  TrajContext(const Trajectory & t, const EgoState & ego) : traj(t), kin(derive_kinematics(t, ego)) {}
};

bool near(const OrientedBox & a, const OrientedBox & b)
{
  const Vec2 d = a.center().position() - b.center().position();
  const double r = a.circumradius() + b.circumradius();
  return geom::dot(d, d) <= r * r;
}

double nc_impl(const TrajContext & tc, const Scenario & scn, const TeacherConfig & cfg)
{
  for (std::size_t t = 1; t <= kHorizonSteps; ++t) {
    if (tc.kin.speed[t - 1] < cfg.at_fault_speed) {
      continue;
    }
    const OrientedBox ego = scn.ego.box_at(tc.traj[t - 1]);
    for (const auto & ag : scn.agents) {
      const OrientedBox other = ag.box_at_index(t);
      if (near(ego, other) && geom::obb_intersects(ego, other)) {
        return 0.0;
      }
    }
  }
  return 1.0;
}

double dac_impl(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  for (const auto & pose : traj.poses()) {
    if (!geom::box_in_polygons(scn.ego.box_at(pose), scn.drivable, cfg.dac_edge_samples)) {
      return 0.0;
    }
  }
  return 1.0;
}

double ttc_impl(const TrajContext & tc, const Scenario & scn, const TeacherConfig & cfg)
{
  if (scn.agents.empty()) {
    return 1.0;
  }
  const auto sub_steps = static_cast<std::size_t>(std::llround(cfg.ttc_horizon / cfg.ttc_step));
  for (std::size_t t = 1; t <= kHorizonSteps; ++t) {
    const Pose & p = tc.traj[t - 1];
    const double v = tc.kin.speed[t - 1];
    const Vec2 dir = p.direction();
    for (std::size_t j = 1; j <= sub_steps; ++j) {
      const double tau = static_cast<double>(j) * cfg.ttc_step;
      const Vec2 c = p.position() + (v * tau) * dir;
      const OrientedBox ego = scn.ego.box_at(Pose(c.x, c.y, p.heading()));
      const double abs_time = static_cast<double>(t) * kStepDt + tau;
      const auto agent_index = static_cast<std::size_t>(std::llround(abs_time / kStepDt));
      for (const auto & ag : scn.agents) {
        const OrientedBox other = ag.box_at_index(agent_index);
        if (near(ego, other) && geom::obb_intersects(ego, other)) {
          return 0.0;
        }
      }
    }
  }
  return 1.0;
}

double comfort_impl(const KinematicProfile & k, const TeacherConfig & cfg)
{
  const auto & b = cfg.comfort;
  auto within = [](const std::vector<double> & v, double lo, double hi) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x >= lo && x <= hi; });
  };
  const bool ok = within(k.lon_accel, b.lon_accel_min, b.lon_accel_max) &&
                  within(k.lat_accel, -b.lat_accel_abs, b.lat_accel_abs) &&
                  within(k.lon_jerk, -b.lon_jerk_abs, b.lon_jerk_abs) &&
                  within(k.yaw_rate, -b.yaw_rate_abs, b.yaw_rate_abs) &&
                  within(k.yaw_accel, -b.yaw_accel_abs, b.yaw_accel_abs);
  return ok ? 1.0 : 0.0;
}

Vec2 front_bumper(const Pose & p, const EgoState & ego) { return p.position() + (0.5 * ego.length) * p.direction(); }

double tl_impl(const Trajectory & traj, const Scenario & scn)
{
  for (const auto & sig : scn.signals) {
    bool was_inside = false;
    for (std::size_t t = 1; t <= kHorizonSteps; ++t) {
      const bool inside = geom::point_in_polygon(front_bumper(traj[t - 1], scn.ego), sig.region);
      if (inside && !was_inside && sig.state_at(static_cast<double>(t) * kStepDt) == SignalState::Red) {
        return 0.0;
      }
      was_inside = inside;
    }
  }
  return 1.0;
}

double ddc_impl(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  if (scn.lanes.empty()) {
    return 1.0;
  }
  double backward = 0.0;
  Vec2 prev = scn.ego.pose.position();
  for (const auto & pose : traj.poses()) {
    const Vec2 cur = pose.position();
    const auto seg = geom::nearest_segment(0.5 * (prev + cur), scn.lanes);
    const double along = geom::dot(cur - prev, seg.projection.tangent);
    backward += std::max(0.0, -along);
    prev = cur;
  }
  return backward <= cfg.tau_d ? 1.0 : 0.0;
}

double lk_impl(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  if (scn.lanes.empty()) {
    throw Error(ErrorKind::InvalidArgument, "lane keeping needs at least one lane", "lanes");
  }
  for (const auto & pose : traj.poses()) {
    if (geom::nearest_segment(pose.position(), scn.lanes).projection.lateral > cfg.tau_d) {
      return 0.0;
    }
  }
  return 1.0;
}

double origin_station(const Scenario & scn)
{
  return geom::project_onto_polyline(scn.ego.pose.position(), scn.route).arc_length;
}

double progress_impl(const Trajectory & traj, const Scenario & scn, double origin)
{
  return geom::project_onto_polyline(traj.back().position(), scn.route).arc_length - origin;
}

}  // namespace

double score_nc(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  return nc_impl(TrajContext(traj, scn.ego), scn, cfg);
}

double score_dac(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  return dac_impl(traj, scn, cfg);
}

double score_ttc(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  return ttc_impl(TrajContext(traj, scn.ego), scn, cfg);
}

double score_comfort(const Trajectory & traj, const EgoState & ego, const TeacherConfig & cfg)
{
  return comfort_impl(derive_kinematics(traj, ego), cfg);
}

double score_tl(const Trajectory & traj, const Scenario & scn, const TeacherConfig &) { return tl_impl(traj, scn); }

double score_ddc(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  return ddc_impl(traj, scn, cfg);
}

double score_lk(const Trajectory & traj, const Scenario & scn, const TeacherConfig & cfg)
{
  return lk_impl(traj, scn, cfg);
}

double route_progress(const Trajectory & traj, const Scenario & scn)
{
  return progress_impl(traj, scn, origin_station(scn));
}

ProgressReference progress_reference(
  std::span<const Trajectory> candidates, const Scenario & scn, const TeacherConfig & cfg)
{
  const double origin = origin_station(scn);
  ProgressReference ref;
  for (const auto & t : candidates) {
    if (score_nc(t, scn, cfg) == 1.0 && score_dac(t, scn, cfg) == 1.0) {
      ref.reference = std::max(ref.reference, progress_impl(t, scn, origin));
    }
  }
  return ref;
}

double ep_from_progress(double progress, double reference, const TeacherConfig & cfg)
{
  if (reference < cfg.ep_min_ref) {
    return progress >= 0.0 ? 1.0 : 0.0;
  }
  return std::clamp(progress / reference, 0.0, 1.0);
}

double score_ep(
  const Trajectory & traj, const Scenario & scn, const std::optional<ProgressReference> & ref,
  const TeacherConfig & cfg)
{
  if (!ref) {
    throw Error(ErrorKind::NoReference, "ego progress needs a per-scenario reference", scn.id);
  }
  return ep_from_progress(route_progress(traj, scn), ref->reference, cfg);
}

EcDiscrepancy ec_discrepancy(const KinematicProfile & current, const KinematicProfile & preceding)
{
  auto rms = [](const std::vector<double> & a, const std::vector<double> & b) {
    const std::size_t n = std::min(a.size(), b.size());
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return std::sqrt(s / static_cast<double>(n));
  };
  return {
    rms(current.lon_accel, preceding.lon_accel),
    rms(current.lon_jerk, preceding.lon_jerk),
    rms(current.yaw_rate, preceding.yaw_rate),
    rms(current.yaw_accel, preceding.yaw_accel),
  };
}

double ec_decision(const EcDiscrepancy & d, const TeacherConfig & cfg)
{
  return d.accel <= cfg.tau_a && d.jerk <= cfg.tau_j && d.yaw_rate <= cfg.tau_yr && d.yaw_accel <= cfg.tau_ya
           ? 1.0
           : 0.0;
}

double score_ec(
  const Trajectory & curr, const std::optional<Trajectory> & prev,
  const std::optional<geom::RigidTransform> & prev_to_curr, const EgoState & ego, const TeacherConfig & cfg)
{
  if (!prev) {
    return 1.0;
  }
  if (!prev_to_curr) {
    throw Error(ErrorKind::FrameMismatch, "preceding prediction given without a frame transform");
  }
  // Frames are 0.5 s apart: the preceding plan's pose 5 (index 4) is at t = 0 of the current frame.
  constexpr std::size_t shift = 5;
  constexpr std::size_t overlap = kHorizonSteps - shift;
  const Trajectory moved = prev->transformed(*prev_to_curr);
  const auto & mp = moved.poses();
  const auto & cp = curr.poses();
  const KinematicProfile k_prev =
    derive_kinematics(std::span<const Pose>(mp.data() + shift, overlap), mp[shift - 1]);
  const KinematicProfile k_curr = derive_kinematics(std::span<const Pose>(cp.data(), overlap), ego.pose);
  return ec_decision(ec_discrepancy(k_curr, k_prev), cfg);
}

// ---- matrices --------------------------------------------------------------

SubScores ScoreMatrix::row_scores(std::size_t row) const
{
  SubScores s;
  s.nc = at(row, Metric::NC);
  s.dac = at(row, Metric::DAC);
  s.ep = at(row, Metric::EP);
  s.ttc = at(row, Metric::TTC);
  s.c = at(row, Metric::C);
  s.tl = at(row, Metric::TL);
  s.ddc = at(row, Metric::DDC);
  s.lk = at(row, Metric::LK);
  return s;
}

ScoreMatrix teach_scenario(
  const Scenario & scn, std::span<const Trajectory> candidates, const TeacherConfig & cfg, int jobs)
{
  cfg.validate();
  const std::size_t k = candidates.size();
  ScoreMatrix sm;
  sm.scenario_id = scn.id;
  sm.rows = k;
  sm.values.assign(k * kNumDistillMetrics, 0.0);
  sm.config_hash = cfg.hash();
  std::vector<double> progress(k, 0.0);
  const double origin = origin_station(scn);

  parallel_for(k, jobs, [&](std::size_t i) {
    const Trajectory & traj = candidates[i];
    const TrajContext tc(traj, scn.ego);
    double * row = sm.values.data() + i * kNumDistillMetrics;
    row[idx(Metric::NC)] = nc_impl(tc, scn, cfg);
    row[idx(Metric::DAC)] = dac_impl(traj, scn, cfg);
    row[idx(Metric::TTC)] = ttc_impl(tc, scn, cfg);
    row[idx(Metric::C)] = comfort_impl(tc.kin, cfg);
    row[idx(Metric::TL)] = tl_impl(traj, scn);
    row[idx(Metric::DDC)] = ddc_impl(traj, scn, cfg);
    row[idx(Metric::LK)] = lk_impl(traj, scn, cfg);
    progress[i] = progress_impl(traj, scn, origin);
  });

  double reference = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (sm.at(i, Metric::NC) == 1.0 && sm.at(i, Metric::DAC) == 1.0) {
      reference = std::max(reference, progress[i]);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    sm.values[i * kNumDistillMetrics + idx(Metric::EP)] = ep_from_progress(progress[i], reference, cfg);
  }
  return sm;
}

ScoreMatrix teach_scenario(const Scenario & scn, const Vocabulary & vocab, const TeacherConfig & cfg, int jobs)
{
  ScoreMatrix sm = teach_scenario(scn, std::span<const Trajectory>(vocab.trajectories()), cfg, jobs);
  sm.vocab_hash = vocab.hash();
  return sm;
}

SubScores evaluate_trajectory(
  const Trajectory & traj, const Scenario & scn, const Vocabulary & vocab, const TeacherConfig & cfg)
{
  std::vector<Trajectory> candidates = vocab.trajectories();
  candidates.push_back(traj);
  const ProgressReference ref = progress_reference(candidates, scn, cfg);
  SubScores s;
  s.nc = score_nc(traj, scn, cfg);
  s.dac = score_dac(traj, scn, cfg);
  s.ep = score_ep(traj, scn, ref, cfg);
  s.ttc = score_ttc(traj, scn, cfg);
  s.c = score_comfort(traj, scn.ego, cfg);
  s.tl = score_tl(traj, scn, cfg);
  s.ddc = score_ddc(traj, scn, cfg);
  s.lk = score_lk(traj, scn, cfg);
  s.ec = score_ec(traj, std::nullopt, std::nullopt, scn.ego, cfg);
  return s;
}

// ---- score matrix files ----------------------------------------------------

namespace
{

constexpr char kMagic[8] = {'H', 'M', 'D', 'P', 'S', 'C', 'R', '1'};

void put_u32(std::string & out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string & in, std::size_t at)
{
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::filesystem::path sidecar_path(const std::filesystem::path & path)
{
  auto p = path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_score_matrix(const ScoreMatrix & sm, const std::filesystem::path & path)
{
  std::string bytes(kMagic, kMagic + 8);
  put_u32(bytes, static_cast<std::uint32_t>(sm.rows));
  put_u32(bytes, static_cast<std::uint32_t>(kNumDistillMetrics));
  for (double v : sm.values) {
    put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_file_atomic(path, bytes);
  const json side = {
    {"scenario_id", sm.scenario_id},
    {"metric_names", sm.metric_names},
    {"config_hash", hex64(sm.config_hash)},
    {"vocab_hash", hex64(sm.vocab_hash)},
  };
  write_file_atomic(sidecar_path(path), side.dump(1) + "\n");
}

ScoreMatrix load_score_matrix(const std::filesystem::path & path)
{
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw Error(ErrorKind::Schema, "not a score matrix file (bad magic)", path.string());
  }
  ScoreMatrix sm;
  sm.rows = get_u32(bytes, 8);
  const std::uint32_t m = get_u32(bytes, 12);
  if (m != kNumDistillMetrics) {
    throw Error(ErrorKind::Schema, "score matrix must have 8 metric columns", path.string());
  }
  if (bytes.size() != 16 + 4 * sm.rows * m) {
    throw Error(ErrorKind::Schema, "score matrix size does not match its header", path.string());
  }
  sm.values.resize(sm.rows * m);
  for (std::size_t i = 0; i < sm.values.size(); ++i) {
    sm.values[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  }
  const json side = read_json(sidecar_path(path));
  if (!side.contains("scenario_id") || !side.contains("config_hash")) {
    throw Error(ErrorKind::Schema, "score sidecar needs scenario_id and config_hash", sidecar_path(path).string());
  }
  sm.scenario_id = side["scenario_id"].get<std::string>();
  sm.metric_names = side.value("metric_names", sm.metric_names);
  sm.config_hash = std::stoull(side["config_hash"].get<std::string>(), nullptr, 16);
  sm.vocab_hash = std::stoull(side.value("vocab_hash", std::string("0")), nullptr, 16);
  return sm;
}

}  // namespace hmdp
