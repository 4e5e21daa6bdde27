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
#include "test_util.hpp"

#include "hmdp/scenario.hpp"
#include "hmdp/teachers.hpp"

#include <cmath>
#include <filesystem>

using namespace hmdp;

TEST_CASE("derive_kinematics: straight constant velocity")
{
  const Trajectory t = test::straight(5.0);
  const KinematicProfile k = derive_kinematics(t, EgoState{});
  REQUIRE(k.speed.size() == 40);
  for (double v : k.speed) CHECK(v == doctest::Approx(5.0));
  for (double a : k.lon_accel) CHECK(a == doctest::Approx(0.0).epsilon(1e-9));
  for (double y : k.yaw_rate) CHECK(y == 0.0);
}

TEST_CASE("derive_kinematics: circular arc matches v/R and v^2/R")
{
  const double r = 20.0, v = 5.0;
  const Trajectory t = test::arc(v, r);
  const KinematicProfile k = derive_kinematics(t, EgoState{});
  for (double w : k.yaw_rate) CHECK(std::abs(w - v / r) < 0.02 * (v / r));
  for (double a : k.lat_accel) CHECK(std::abs(a - v * v / r) < 0.02 * (v * v / r));
}

TEST_CASE("derive_kinematics: uniform acceleration")
{
  // 0 -> 4 m/s over 4 s: x(t) = 0.5 t^2.
  const Trajectory t = test::from_fn([](double time) { return geom::Pose(0.5 * time * time, 0.0, 0.0); });
  const KinematicProfile k = derive_kinematics(t, EgoState{});
  for (double a : k.lon_accel) CHECK(a == doctest::Approx(1.0).epsilon(1e-9));
  for (double j : k.lon_jerk) CHECK(std::abs(j) < 1e-9);
}

TEST_CASE("derive_kinematics series lengths")
{
  const KinematicProfile k = derive_kinematics(test::straight(3.0), EgoState{});
  CHECK(k.speed.size() == 40);
  CHECK(k.lon_accel.size() == 39);
  CHECK(k.lon_jerk.size() == 38);
  CHECK(k.yaw_rate.size() == 40);
  CHECK(k.yaw_accel.size() == 39);
  CHECK(k.lat_accel.size() == 40);
}

TEST_CASE("generation is deterministic and independent of jobs")
{
  const auto a = generate_scenarios(10, 42, TemplateMix::uniform());
  const auto b = generate_scenarios(10, 42, TemplateMix::uniform(), {.no_agents = false, .jobs = 3});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(scenario_to_json(a[i].curr).dump() == scenario_to_json(b[i].curr).dump());
    CHECK(scenario_to_json(a[i].prev).dump() == scenario_to_json(b[i].prev).dump());
    CHECK(a[i].prev_to_curr == b[i].prev_to_curr);
  }
  const auto c = generate_scenarios(10, 43, TemplateMix::uniform());
  CHECK(scenario_to_json(a[0].curr).dump() != scenario_to_json(c[0].curr).dump());
}

TEST_CASE("generated scenes are valid with finite kinematics")
{
  const auto pairs = generate_scenarios(40, 3, TemplateMix::uniform());
  for (const auto & p : pairs) {
    CHECK_NOTHROW(p.curr.validate());
    CHECK_NOTHROW(p.prev.validate());
    CHECK(p.curr.preceding_id == p.prev.id);
    const KinematicProfile k = derive_kinematics(p.curr.human, p.curr.ego);
    for (const auto * series : {&k.speed, &k.lon_accel, &k.lon_jerk, &k.yaw_rate, &k.yaw_accel, &k.lat_accel}) {
      for (double v : *series) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("pair frames agree on the shared world")
{
  // The preceding frame's ego path, moved into the current frame, passes through the origin at t = 0.5 s.
  const auto pairs = generate_scenarios(8, 9, TemplateMix::uniform());
  for (const auto & p : pairs) {
    const geom::Pose at_curr = p.prev_to_curr.apply(p.prev.human[4]);
    CHECK(std::abs(at_curr.x()) < 1e-6);
    CHECK(std::abs(at_curr.y()) < 1e-6);
    CHECK(std::abs(at_curr.heading()) < 1e-6);
    for (std::size_t a = 0; a < p.curr.agents.size(); ++a) {
      const geom::Pose moved = p.prev_to_curr.apply(p.prev.agents[a].poses[5]);
      CHECK(moved.x() == doctest::Approx(p.curr.agents[a].poses[0].x()).epsilon(1e-9));
      CHECK(moved.y() == doctest::Approx(p.curr.agents[a].poses[0].y()).epsilon(1e-9));
    }
  }
}

TEST_CASE("straight road without agents: human passes NC, DAC, TL")
{
  TeacherConfig cfg;
  for (std::size_t i = 0; i < 5; ++i) {
    const FramePair p = generate_pair(42, i, Template::StraightRoad, true);
    CHECK(p.curr.agents.empty());
    CHECK(score_nc(p.curr.human, p.curr, cfg) == 1.0);
    CHECK(score_dac(p.curr.human, p.curr, cfg) == 1.0);
    CHECK(score_tl(p.curr.human, p.curr, cfg) == 1.0);
  }
}

TEST_CASE("template mix parsing")
{
  CHECK_NOTHROW(TemplateMix::parse("uniform").validate());
  CHECK_NOTHROW(TemplateMix::parse("0.1,0.2,0.3,0.4").validate());
  CHECK(TemplateMix::parse("LaneChange").weights[3] == 1.0);
  CHECK_THROWS_AS(TemplateMix::parse("0.5,0.5,0.5,0.5").validate(), Error);
  CHECK_THROWS_AS(TemplateMix::parse("-1,1,0.5,0.5").validate(), Error);
  CHECK_THROWS_AS(TemplateMix::parse("bogus"), Error);
  CHECK_THROWS_AS(generate_scenarios(1, 1, TemplateMix{{0.0, 0.0, 0.0, 0.0}}), Error);
}

TEST_CASE("save/load round trip is lossless")
{
  test::TempDir dir;
  const auto pairs = generate_scenarios(12, 5, TemplateMix::uniform());
  for (const auto & p : pairs) {
    const auto path = dir.path / (p.curr.id + ".json");
    save_scenario(p.curr, path);
    CHECK(load_scenario(path) == p.curr);
  }
  const auto records = save_pairs(pairs, dir.path);
  save_manifest(records, dir.path / "pairs.json");
  const auto loaded = load_pairs(dir.path / "pairs.json");
  REQUIRE(loaded.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].prev == pairs[i].prev);
    CHECK(loaded[i].curr == pairs[i].curr);
    CHECK(loaded[i].prev_to_curr == pairs[i].prev_to_curr);
  }
}

TEST_CASE("schema errors name the offending field")
{
  const auto pair = generate_pair(1, 0, Template::StraightRoad);
  nlohmann::json j = scenario_to_json(pair.curr);

  nlohmann::json missing = j;
  missing.erase("human");
  try {
    scenario_from_json(missing);
    FAIL("expected a schema error");
  } catch (const Error & e) {
    CHECK(e.kind() == ErrorKind::Schema);
    CHECK(std::string(e.what()).find("human") != std::string::npos);
  }

  nlohmann::json short_human = j;
  short_human["human"].erase(short_human["human"].size() - 1);
  try {
    scenario_from_json(short_human);
    FAIL("expected a schema error");
  } catch (const Error & e) {
    CHECK(e.kind() == ErrorKind::Schema);
    CHECK(std::string(e.what()).find("40") != std::string::npos);
  }
}

TEST_CASE("signal timeline lookup")
{
  SignalTimeline tl{geom::Polygon({{0, 0}, {1, 0}, {1, 1}}),
                    {{0.0, 2.0, SignalState::Red}, {2.0, 4.0, SignalState::Green}}};
  CHECK(tl.state_at(0.0) == SignalState::Red);
  CHECK(tl.state_at(1.99) == SignalState::Red);
  CHECK(tl.state_at(2.0) == SignalState::Green);
  CHECK(tl.state_at(4.0) == SignalState::Green);
}
