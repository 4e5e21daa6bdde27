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

#include <fstream>
#include <sstream>

namespace hmdp
{

using nlohmann::json;
namespace fs = std::filesystem;

namespace
{

const json & require(const json & j, const char * key, const std::string & path)
{
  if (!j.is_object()) {
    throw Error(ErrorKind::Schema, "expected an object at '" + path + "'", path);
  }
  const auto it = j.find(key);
  const std::string field = path.empty() ? std::string(key) : path + "." + key;
  if (it == j.end()) {
    throw Error(ErrorKind::Schema, "missing field '" + field + "'", field);
  }
  return *it;
}

std::string join(const std::string & path, const char * key)
{
  return path.empty() ? std::string(key) : path + "." + key;
}

std::string index(const std::string & path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double number(const json & j, const std::string & path)
{
  if (!j.is_number()) {
    throw Error(ErrorKind::Schema, "expected a number at '" + path + "'", path);
  }
  return j.get<double>();
}

const json & array(const json & j, const std::string & path)
{
  if (!j.is_array()) {
    throw Error(ErrorKind::Schema, "expected an array at '" + path + "'", path);
  }
  return j;
}

json point_json(geom::Vec2 p) { return json::array({p.x, p.y}); }
json pose_json(const Pose & p) { return json::array({p.x(), p.y(), p.heading()}); }

geom::Vec2 point_from(const json & j, const std::string & path)
{
  if (!j.is_array() || j.size() != 2) {
    throw Error(ErrorKind::Schema, "expected [x, y] at '" + path + "'", path);
  }
  return {number(j[0], path), number(j[1], path)};
}

Pose pose_from(const json & j, const std::string & path)
{
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorKind::Schema, "expected [x, y, heading] at '" + path + "'", path);
  }
  return Pose(number(j[0], path), number(j[1], path), number(j[2], path));
}

std::vector<geom::Vec2> points_from(const json & j, const std::string & path)
{
  std::vector<geom::Vec2> pts;
  for (std::size_t i = 0; i < array(j, path).size(); ++i) {
    pts.push_back(point_from(j[i], index(path, i)));
  }
  return pts;
}

template <class T>
T construct(const std::string & path, auto && make)
{
  try {
    return make();
  } catch (const Error & e) {
    throw Error(ErrorKind::Schema, std::string(e.what()) + " at '" + path + "'", path);
  }
}

json polyline_json(const geom::Polyline & l)
{
  json a = json::array();
  for (const auto & p : l.points()) a.push_back(point_json(p));
  return a;
}

json polygon_json(const geom::Polygon & poly)
{
  json a = json::array();
  for (const auto & p : poly.vertices()) a.push_back(point_json(p));
  return a;
}

geom::Polyline polyline_from(const json & j, const std::string & path)
{
  auto pts = points_from(j, path);
  return construct<geom::Polyline>(path, [&] { return geom::Polyline(std::move(pts)); });
}

geom::Polygon polygon_from(const json & j, const std::string & path)
{
  auto pts = points_from(j, path);
  return construct<geom::Polygon>(path, [&] { return geom::Polygon(std::move(pts)); });
}

}  // namespace

json trajectory_to_json(const Trajectory & t)
{
  json a = json::array();
  for (const auto & p : t.poses()) a.push_back(pose_json(p));
  return a;
}

Trajectory trajectory_from_json(const json & j_in, const std::string & path)
{
  // Accept either a bare pose array or {"poses": [...]}.
  const json & j = j_in.is_object() ? require(j_in, "poses", path) : j_in;
  const std::string p = j_in.is_object() ? join(path, "poses") : path;
  std::vector<Pose> poses;
  for (std::size_t i = 0; i < array(j, p).size(); ++i) {
    poses.push_back(pose_from(j[i], index(p, i)));
  }
  if (poses.size() != kHorizonSteps) {
    throw Error(
      ErrorKind::Schema,
      "'" + p + "' must have exactly 40 poses (10 Hz over 4 s), got " + std::to_string(poses.size()),
      p);
  }
  return Trajectory::from_poses(poses);
}

json scenario_to_json(const Scenario & s)
{
  json j;
  j["id"] = s.id;
  j["preceding_id"] = s.preceding_id ? json(*s.preceding_id) : json(nullptr);
  j["ego"] = {
    {"pose", pose_json(s.ego.pose)},
    {"velocity", s.ego.velocity},
    {"acceleration", s.ego.acceleration},
    {"command", std::string(to_string(s.ego.command))},
    {"length", s.ego.length},
    {"width", s.ego.width},
  };
  j["route"] = polyline_json(s.route);
  j["lanes"] = json::array();
  for (const auto & l : s.lanes) j["lanes"].push_back(polyline_json(l));
  j["drivable"] = json::array();
  for (const auto & p : s.drivable) j["drivable"].push_back(polygon_json(p));
  j["agents"] = json::array();
  for (const auto & a : s.agents) {
    json poses = json::array();
    for (const auto & p : a.poses) poses.push_back(pose_json(p));
    j["agents"].push_back({{"id", a.id}, {"length", a.length}, {"width", a.width}, {"poses", poses}});
  }
  j["signals"] = json::array();
  for (const auto & sig : s.signals) {
    json phases = json::array();
    for (const auto & ph : sig.phases) {
      phases.push_back(
        {{"start", ph.start}, {"end", ph.end}, {"state", ph.state == SignalState::Red ? "Red" : "Green"}});
    }
    j["signals"].push_back({{"region", polygon_json(sig.region)}, {"phases", phases}});
  }
  j["human"] = trajectory_to_json(s.human);
  return j;
}

Scenario scenario_from_json(const json & j)
{
  Scenario s;
  const auto & id = require(j, "id", "");
  if (!id.is_string()) throw Error(ErrorKind::Schema, "expected a string at 'id'", "id");
  s.id = id.get<std::string>();

  if (auto it = j.find("preceding_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorKind::Schema, "expected a string at 'preceding_id'", "preceding_id");
    s.preceding_id = it->get<std::string>();
  }

  const auto & ego = require(j, "ego", "");
  if (ego.contains("pose")) s.ego.pose = pose_from(ego["pose"], "ego.pose");
  s.ego.velocity = number(require(ego, "velocity", "ego"), "ego.velocity");
  s.ego.acceleration = number(require(ego, "acceleration", "ego"), "ego.acceleration");
  const auto & cmd = require(ego, "command", "ego");
  if (!cmd.is_string()) throw Error(ErrorKind::Schema, "expected a string at 'ego.command'", "ego.command");
  s.ego.command = command_from_string(cmd.get<std::string>());
  if (ego.contains("length")) s.ego.length = number(ego["length"], "ego.length");
  if (ego.contains("width")) s.ego.width = number(ego["width"], "ego.width");

  s.route = polyline_from(require(j, "route", ""), "route");

  const auto & lanes = array(require(j, "lanes", ""), "lanes");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    s.lanes.push_back(polyline_from(lanes[i], index("lanes", i)));
  }

  const auto & drivable = array(require(j, "drivable", ""), "drivable");
  for (std::size_t i = 0; i < drivable.size(); ++i) {
    s.drivable.push_back(polygon_from(drivable[i], index("drivable", i)));
  }

  const auto & agents = array(require(j, "agents", ""), "agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string p = index("agents", i);
    AgentTrack a;
    const auto & aid = require(agents[i], "id", p);
    if (!aid.is_string()) throw Error(ErrorKind::Schema, "expected a string at '" + p + ".id'", p + ".id");
    a.id = aid.get<std::string>();
    a.length = number(require(agents[i], "length", p), p + ".length");
    a.width = number(require(agents[i], "width", p), p + ".width");
    const auto & poses = array(require(agents[i], "poses", p), p + ".poses");
    for (std::size_t k = 0; k < poses.size(); ++k) {
      a.poses.push_back(pose_from(poses[k], index(p + ".poses", k)));
    }
    s.agents.push_back(std::move(a));
  }

  const auto & signals = array(require(j, "signals", ""), "signals");
  for (std::size_t i = 0; i < signals.size(); ++i) {
    const std::string p = index("signals", i);
    auto region = polygon_from(require(signals[i], "region", p), p + ".region");
    std::vector<SignalPhase> phases;
    const auto & ph = array(require(signals[i], "phases", p), p + ".phases");
    for (std::size_t k = 0; k < ph.size(); ++k) {
      const std::string pp = index(p + ".phases", k);
      SignalPhase phase;
      phase.start = number(require(ph[k], "start", pp), pp + ".start");
      phase.end = number(require(ph[k], "end", pp), pp + ".end");
      const auto & st = require(ph[k], "state", pp);
      if (st == "Red") {
        phase.state = SignalState::Red;
      } else if (st == "Green") {
        phase.state = SignalState::Green;
      } else {
        throw Error(ErrorKind::Schema, "signal state must be Red or Green at '" + pp + ".state'", pp + ".state");
      }
      phases.push_back(phase);
    }
    s.signals.push_back(SignalTimeline{std::move(region), std::move(phases)});
  }

  s.human = trajectory_from_json(require(j, "human", ""), "human");
  s.validate();
  return s;
}

std::string read_file(const fs::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open file", path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path & path, const std::string & content)
{
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorKind::Io, "cannot write file", path.string());
    }
    out << content;
    if (!out) {
      throw Error(ErrorKind::Io, "write failed", path.string());
    }
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path & path)
{
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error & e) {
    throw Error(ErrorKind::Schema, std::string("malformed JSON: ") + e.what(), path.string());
  }
}

void save_scenario(const Scenario & s, const fs::path & path)
{
  write_file_atomic(path, scenario_to_json(s).dump(1) + "\n");
}

Scenario load_scenario(const fs::path & path)
{
  const json j = read_json(path);
  try {
    return scenario_from_json(j);
  } catch (const Error & e) {
    throw Error(e.kind(), std::string(e.what()) + " in " + path.string(), e.context());
  }
}

std::vector<PairRecord> save_pairs(const std::vector<FramePair> & pairs, const fs::path & dir)
{
  std::vector<PairRecord> records;
  records.reserve(pairs.size());
  for (const auto & pair : pairs) {
    PairRecord r;
    r.prev = fs::path("scenarios") / (pair.prev.id + ".json");
    r.curr = fs::path("scenarios") / (pair.curr.id + ".json");
    r.transform = pair.prev_to_curr;
    save_scenario(pair.prev, dir / r.prev);
    save_scenario(pair.curr, dir / r.curr);
    records.push_back(std::move(r));
  }
  return records;
}

void save_manifest(const std::vector<PairRecord> & records, const fs::path & path)
{
  json a = json::array();
  for (const auto & r : records) {
    a.push_back({
      {"prev", r.prev.generic_string()},
      {"curr", r.curr.generic_string()},
      {"transform", {{"dx", r.transform.dx}, {"dy", r.transform.dy}, {"dtheta", r.transform.dtheta}}},
    });
  }
  write_file_atomic(path, a.dump(1) + "\n");
}

std::vector<PairRecord> load_manifest(const fs::path & path)
{
  const json j = read_json(path);
  if (!j.is_array()) {
    throw Error(ErrorKind::Schema, "manifest must be a JSON array", path.string());
  }
  const fs::path base = path.parent_path();
  std::vector<PairRecord> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = index("", i);
    PairRecord r;
    const auto & prev = require(j[i], "prev", p);
    const auto & curr = require(j[i], "curr", p);
    if (!prev.is_string() || !curr.is_string()) {
      throw Error(ErrorKind::Schema, "manifest paths must be strings", p);
    }
    r.prev = base / prev.get<std::string>();
    r.curr = base / curr.get<std::string>();
    const auto & tf = require(j[i], "transform", p);
    r.transform.dx = number(require(tf, "dx", p + ".transform"), p + ".transform.dx");
    r.transform.dy = number(require(tf, "dy", p + ".transform"), p + ".transform.dy");
    r.transform.dtheta = number(require(tf, "dtheta", p + ".transform"), p + ".transform.dtheta");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<FramePair> load_pairs(const fs::path & manifest)
{
  std::vector<FramePair> pairs;
  for (const auto & r : load_manifest(manifest)) {
    pairs.push_back(FramePair{load_scenario(r.prev), load_scenario(r.curr), r.transform});
  }
  return pairs;
}

}  // namespace hmdp
