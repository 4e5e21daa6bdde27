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

// Low-level extension module; structured values cross the boundary as JSON text
// and numeric arrays as numpy arrays. See hmdp/__init__.py for the public API.

#include "hmdp/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
namespace pl = hmdp::pipeline;
using nlohmann::json;

namespace
{

using PoseArray = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

hmdp::Trajectory to_trajectory(const PoseArray & poses)
{
  std::vector<hmdp::geom::Pose> v;
  for (Eigen::Index i = 0; i < poses.rows(); ++i) v.emplace_back(poses(i, 0), poses(i, 1), poses(i, 2));
  return hmdp::Trajectory::from_poses(v);
}

PoseArray to_array(const hmdp::Trajectory & t)
{
  PoseArray out(static_cast<Eigen::Index>(hmdp::kHorizonSteps), 3);
  for (std::size_t i = 0; i < hmdp::kHorizonSteps; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out(r, 0) = t[i].x();
    out(r, 1) = t[i].y();
    out(r, 2) = t[i].heading();
  }
  return out;
}

hmdp::SubScores to_subscores(const py::dict & d)
{
  hmdp::SubScores s;
  auto get = [&](const char * key, std::optional<double> & slot) {
    if (d.contains(key)) slot = d[key].cast<double>();
  };
  get("NC", s.nc);
  get("DAC", s.dac);
  get("EP", s.ep);
  get("TTC", s.ttc);
  get("C", s.c);
  get("TL", s.tl);
  get("DDC", s.ddc);
  get("LK", s.lk);
  get("EC", s.ec);
  return s;
}

py::dict from_subscores(const hmdp::SubScores & s)
{
  py::dict d;
  auto put = [&](const char * key, const std::optional<double> & slot) {
    if (slot) d[key] = *slot;
  };
  put("NC", s.nc);
  put("DAC", s.dac);
  put("EP", s.ep);
  put("TTC", s.ttc);
  put("C", s.c);
  put("TL", s.tl);
  put("DDC", s.ddc);
  put("LK", s.lk);
  put("EC", s.ec);
  return d;
}

hmdp::geom::OrientedBox to_box(const std::array<double, 5> & b)
{
  return {hmdp::geom::Pose(b[0], b[1], b[2]), b[3], b[4]};
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
  m.doc() = "Trajectory scoring, distillation and selection (native core)";

  static py::handle error_type = py::exception<hmdp::Error>(m, "HmdpError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const hmdp::Error & e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("kind") = std::string(hmdp::to_string(e.kind()));
      exc.attr("context") = e.context();
      exc.attr("exit_code") = pl::exit_code(e.kind());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.attr("HORIZON_STEPS") = hmdp::kHorizonSteps;

  m.def("pdms", [](const py::dict & d) { return hmdp::pdms(to_subscores(d)); }, py::arg("scores"));
  m.def("epdms", [](const py::dict & d) { return hmdp::epdms(to_subscores(d)); }, py::arg("scores"));

  m.def(
    "obb_intersects",
    [](const std::array<double, 5> & a, const std::array<double, 5> & b) {
      return hmdp::geom::obb_intersects(to_box(a), to_box(b));
    },
    py::arg("a"), py::arg("b"), "Boxes are (x, y, heading, half_length, half_width).");

  m.def(
    "flatten", [](const PoseArray & poses) {
      const hmdp::FlatTrajectory f = hmdp::flatten(to_trajectory(poses));
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())));
    },
    py::arg("poses"));

  m.def(
    "imitation_targets",
    [](const Eigen::VectorXd & human, const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> & centers) {
      if (human.size() != static_cast<Eigen::Index>(hmdp::kFlatDim) ||
          centers.cols() != static_cast<Eigen::Index>(hmdp::kFlatDim)) {
        throw hmdp::Error(hmdp::ErrorKind::ShapeMismatch, "expected a 120-vector and a k x 120 matrix", "centers");
      }
      hmdp::FlatTrajectory h{};
      std::copy(human.data(), human.data() + human.size(), h.begin());
      std::vector<hmdp::FlatTrajectory> c(static_cast<std::size_t>(centers.rows()));
      for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t d = 0; d < hmdp::kFlatDim; ++d) {
          c[i][d] = centers(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
        }
      }
      const auto y = hmdp::imitation_targets(h, c).y;
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
    },
    py::arg("human"), py::arg("centers"));

  m.def(
    "generate_json",
    [](std::size_t count, std::uint64_t seed, const std::string & mix) {
      json out = json::array();
      for (const auto & p : hmdp::generate_scenarios(count, seed, hmdp::TemplateMix::parse(mix))) {
        out.push_back({{"prev", hmdp::scenario_to_json(p.prev)},
                       {"curr", hmdp::scenario_to_json(p.curr)},
                       {"prev_to_curr", {p.prev_to_curr.dx, p.prev_to_curr.dy, p.prev_to_curr.dtheta}}});
      }
      return out.dump();
    },
    py::arg("count"), py::arg("seed"), py::arg("mix") = "uniform");

  m.def(
    "human_poses", [](const std::string & scenario_json) {
      return to_array(hmdp::scenario_from_json(json::parse(scenario_json)).human);
    },
    py::arg("scenario_json"));

  m.def(
    "evaluate",
    [](const std::string & scenario_json, const PoseArray & poses, const std::filesystem::path & vocab,
       const std::optional<std::string> & config_json) {
      const hmdp::Scenario scn = hmdp::scenario_from_json(json::parse(scenario_json));
      const hmdp::TeacherConfig cfg =
        config_json ? hmdp::TeacherConfig::from_json(json::parse(*config_json)) : hmdp::TeacherConfig{};
      const hmdp::Vocabulary v = hmdp::load_vocabulary(vocab);
      py::gil_scoped_release release;
      const hmdp::SubScores s = hmdp::evaluate_trajectory(to_trajectory(poses), scn, v, cfg);
      py::gil_scoped_acquire acquire;
      return from_subscores(s);
    },
    py::arg("scenario_json"), py::arg("poses"), py::arg("vocab"), py::arg("config_json") = py::none());

  // ---- file-level commands --------------------------------------------------

  m.def(
    "gen",
    [](std::size_t count, std::uint64_t seed, const std::filesystem::path & out, const std::string & mix,
       const std::optional<std::array<std::size_t, 3>> & split, int jobs) {
      py::gil_scoped_release release;
      pl::gen({count, seed, mix, out, split, jobs});
    },
    py::arg("count"), py::arg("seed"), py::arg("out"), py::arg("mix") = "uniform", py::arg("split") = py::none(),
    py::arg("jobs") = 1);

  m.def(
    "vocab",
    [](std::size_t samples, std::size_t k, std::size_t iters, std::uint64_t seed, const std::filesystem::path & out,
       int jobs) {
      py::gil_scoped_release release;
      pl::vocab({samples, k, iters, seed, out, jobs});
    },
    py::arg("samples"), py::arg("k"), py::arg("iters"), py::arg("seed"), py::arg("out"), py::arg("jobs") = 1);

  m.def(
    "teach",
    [](const std::filesystem::path & scenarios, const std::filesystem::path & vocab, const std::filesystem::path & out,
       const std::optional<std::filesystem::path> & config, int jobs) {
      py::gil_scoped_release release;
      pl::teach({scenarios, vocab, config, out, jobs});
    },
    py::arg("scenarios"), py::arg("vocab"), py::arg("out"), py::arg("config") = py::none(), py::arg("jobs") = 1);

  m.def(
    "train",
    [](const std::filesystem::path & scenarios, const std::filesystem::path & scores, const std::filesystem::path & vocab,
       const std::filesystem::path & out, std::uint64_t seed, std::size_t epochs, double lr, std::size_t batch,
       int d_model, const std::vector<std::string> & ablate, int jobs) {
      pl::TrainArgs a;
      a.scenarios = scenarios;
      a.scores = scores;
      a.vocab = vocab;
      a.out = out;
      a.seed = seed;
      a.epochs = epochs;
      a.lr = lr;
      a.batch = batch;
      a.d_model = d_model;
      a.ablate = ablate;
      a.jobs = jobs;
      py::gil_scoped_release release;
      pl::train(a);
    },
    py::arg("scenarios"), py::arg("scores"), py::arg("vocab"), py::arg("out"), py::arg("seed"),
    py::arg("epochs") = 20, py::arg("lr") = 1e-4, py::arg("batch") = 32, py::arg("d_model") = 64,
    py::arg("ablate") = std::vector<std::string>{}, py::arg("jobs") = 1);

  m.def(
    "calibrate",
    [](const std::filesystem::path & model, const std::filesystem::path & scenarios, const std::filesystem::path & out,
       const std::optional<std::filesystem::path> & grid, int jobs) {
      hmdp::GridResult r;
      {
        py::gil_scoped_release release;
        r = pl::calibrate({model, scenarios, grid, out, jobs});
      }
      return json{{"weights", r.best.to_json()}, {"mean_epdms", r.best_epdms}}.dump();
    },
    py::arg("model"), py::arg("scenarios"), py::arg("out"), py::arg("grid") = py::none(), py::arg("jobs") = 1);

  m.def(
    "benchmark",
    [](const std::filesystem::path & model, const std::filesystem::path & weights, const std::filesystem::path & scenarios,
       const std::filesystem::path & out, const std::optional<std::string> & compare, int jobs) {
      json r;
      {
        py::gil_scoped_release release;
        r = pl::benchmark({model, weights, scenarios, out, compare, jobs});
      }
      return r.dump();
    },
    py::arg("model"), py::arg("weights"), py::arg("scenarios"), py::arg("out"), py::arg("compare") = py::none(),
    py::arg("jobs") = 1);
}
