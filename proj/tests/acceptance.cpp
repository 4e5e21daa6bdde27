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

// Acceptance runner: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails.

#include "CLI11.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include "hmdp/pipeline.hpp"
#include "hmdp/rng.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

using namespace hmdp;
namespace fs = std::filesystem;
namespace pl = hmdp::pipeline;
using nlohmann::json;

namespace
{

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char * f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1: aggregate formulas -------------------------------------------------

Outcome formulas()
{
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    SubScores s;
    const double nc = rng.bernoulli(0.8) ? 1.0 : rng.uniform();
    const double dac = rng.bernoulli(0.8) ? 1.0 : rng.uniform();
    const double ddc = rng.bernoulli(0.8) ? 1.0 : rng.uniform();
    const double tl = rng.bernoulli(0.8) ? 1.0 : rng.uniform();
    const double ttc = rng.uniform(), c = rng.uniform(), ep = rng.uniform(), lk = rng.uniform(), ec = rng.uniform();
    s.nc = nc, s.dac = dac, s.ddc = ddc, s.tl = tl, s.ttc = ttc, s.c = c, s.ep = ep, s.lk = lk, s.ec = ec;
    const double p_hand = nc * dac * (5 * ttc + 2 * c + 5 * ep) / 12;
    const double e_hand = nc * dac * ddc * tl * (5 * ttc + 2 * c + 5 * ep + 5 * lk + 5 * ec) / 22;
    worst = std::max({worst, std::abs(pdms(s) - p_hand), std::abs(epdms(s) - e_hand)});
  }
  SubScores ones;
  ones.nc = ones.dac = ones.ddc = ones.tl = ones.ttc = ones.c = ones.ep = ones.lk = ones.ec = 1.0;
  SubScores half = ones;
  half.ep = 0.5;
  SubScores eight = ones;
  eight.ep = 0.8;
  const double p_spot = pdms(half), e_spot = epdms(eight);
  const bool ok = worst < 1e-9 && std::abs(p_spot - 0.7916666666666666) < 1e-9 &&
                  std::abs(e_spot - 0.9545454545454546) < 1e-9;
  return {ok, fmt("max |diff| %.2e over 20 vectors; PDMS(EP=0.5) %.9f; EPDMS(EP=0.8) %.9f", worst, p_spot, e_spot)};
}

// ---- 2: box overlap vs sampling oracle ---------------------------------------

Outcome geometry()
{
  using geom::OrientedBox;
  using geom::Pose;
  Rng rng(202);
  auto random_box = [&] {
    return OrientedBox(
      Pose(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.2, 3.2)), rng.uniform(0.3, 2.5),
      rng.uniform(0.2, 1.2));
  };
  auto rect = [](const OrientedBox & b) {
    return oracle::Rect{b.center().x(), b.center().y(), b.center().heading(), b.half_length(), b.half_width()};
  };
  constexpr int n = 200;
  int overlaps = 0, false_negatives = 0, boundary = 0, unexplained = 0, asymmetric = 0;
  for (int i = 0; i < 1000; ++i) {
    const OrientedBox a = random_box(), b = random_box();
    const bool fast = geom::obb_intersects(a, b);
    asymmetric += fast != geom::obb_intersects(b, a);
    const bool grid = oracle::rects_overlap_grid(rect(a), rect(b), n);
    overlaps += grid;
    if (grid && !fast) ++false_negatives;
    if (!grid && fast) {
      ++boundary;
      const double tol = std::max(oracle::grid_cell(rect(a), n), oracle::grid_cell(rect(b), n));
      unexplained += !oracle::rects_overlap_grid(rect(a), rect(b), n, tol);
    }
  }
  return {false_negatives == 0 && unexplained == 0 && asymmetric == 0,
          fmt("1000 pairs, %d overlapping; %d false negatives; %d boundary disagreements (%d beyond one cell)",
              overlaps, false_negatives, boundary, unexplained)};
}

// ---- 3: gradient check -------------------------------------------------------

void randomize_biases(StudentModel & model, Rng & rng)
{
  // Zero-initialized biases would leave some gradient paths unexercised.
  model.params().visit([&](const std::string &, Matrix & w) {
    if (w.rows() == 1) {
      for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = rng.uniform(-0.2, 0.2);
    }
  });
}

Outcome gradients()
{
  StudentConfig sc;
  sc.d_model = 16;
  double small_worst = 0.0, scene_worst = 0.0;
  std::size_t small_checked = 0, scene_checked = 0, small_skipped = 0, scene_skipped = 0;

  // Random small instances: k <= 8 candidates, at most 4 tokens, some from the preceding frame.
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    Rng rng(300 + inst);
    const auto k = static_cast<Eigen::Index>(2 + rng.uniform_index(7));
    StudentModel model(sc, 500 + inst);
    randomize_biases(model, rng);
    Matrix vin(k, static_cast<Eigen::Index>(kFlatDim));
    for (Eigen::Index i = 0; i < vin.size(); ++i) vin.data()[i] = rng.uniform(-1.0, 1.0);
    std::vector<TrainSample> batch(2);
    for (auto & s : batch) {
      const auto n = static_cast<Eigen::Index>(1 + rng.uniform_index(4));
      s.tokens.tokens.resize(n, static_cast<Eigen::Index>(kTokenDim));
      for (Eigen::Index i = 0; i < s.tokens.tokens.size(); ++i) s.tokens.tokens.data()[i] = rng.uniform(-1.0, 1.0);
      s.tokens.types.assign(static_cast<std::size_t>(n), TokenType::Agent);
      s.tokens.n_current = 1 + rng.uniform_index(static_cast<std::uint64_t>(n));
      s.ego = {rng.uniform(0.0, 1.5), rng.uniform(-1.0, 1.0), rng.bernoulli(0.5) ? 1.0 : 0.0, 0.0};
      double z = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) z += s.target.y.emplace_back(std::exp(rng.uniform(-2.0, 2.0)));
      for (auto & y : s.target.y) y /= z;
      for (Eigen::Index i = 0; i < k * static_cast<Eigen::Index>(kNumDistillMetrics); ++i) {
        s.scores.push_back(rng.bernoulli(0.6) ? 1.0 : rng.uniform());
      }
    }
    GradCheckOptions opt;
    opt.max_entries = 100;
    opt.seed = inst;
    const GradCheckReport r = grad_check(model, vin, batch, opt);
    small_worst = std::max(small_worst, r.max_rel_error);
    small_skipped += r.skipped_at_kinks;
    for (const auto & b : r.blocks) small_checked += b.checked;
  }

  // Generated frame pairs with their full token sets and teacher targets.
  const TeacherConfig cfg;
  for (std::uint64_t inst = 0; inst < 3; ++inst) {
    Rng rng(350 + inst);
    KMeansOptions ko;
    ko.k = 8;
    ko.iterations = 10;
    ko.seed = inst;
    const Vocabulary v = kmeans(sample_trajectories(200, 40 + inst), ko);
    StudentModel model(sc, 550 + inst);
    randomize_biases(model, rng);
    std::vector<TrainSample> batch;
    for (const auto & p : generate_scenarios(2, 60 + inst, TemplateMix::uniform())) {
      batch.push_back(make_sample(p, v, teach_scenario(p.curr, v, cfg), sc));
    }
    GradCheckOptions opt;
    opt.max_entries = 20;
    opt.seed = inst;
    const GradCheckReport r = grad_check(model, vocab_inputs(v, sc), batch, opt);
    scene_worst = std::max(scene_worst, r.max_rel_error);
    scene_skipped += r.skipped_at_kinks;
    for (const auto & b : r.blocks) scene_checked += b.checked;
  }
  // Entries straddling a ReLU switch at every step size are not differentiable there.
  const bool few_kinks = 100 * (small_skipped + scene_skipped) <= small_checked + scene_checked;
  return {small_worst < 1e-4 && scene_worst < 1e-4 && few_kinks,
          fmt("10 random small instances (k <= 8, d = 16, <= 4 tokens): %zu entries, max relative error %.3e, "
              "%zu at ReLU kinks; 3 generated scenes: %zu entries, max %.3e, %zu at ReLU kinks",
              small_checked, small_worst, small_skipped, scene_checked, scene_worst, scene_skipped)};
}

// ---- 4: imitation targets ----------------------------------------------------

Outcome imitation()
{
  Rng rng(404);
  const auto humans = sample_trajectories(100, 41);
  double worst = 0.0;
  int argmax_miss = 0;
  for (std::size_t inst = 0; inst < 100; ++inst) {
    const FlatTrajectory human = flatten(humans[inst]);
    const std::size_t k = 2 + rng.uniform_index(63);
    const double scale = rng.uniform(0.02, 0.4);
    std::vector<FlatTrajectory> centers(k);
    std::vector<double> d2(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t d = 0; d < kFlatDim; ++d) {
        centers[i][d] = human[d] + rng.uniform(-scale, scale);
        d2[i] += (centers[i][d] - human[d]) * (centers[i][d] - human[d]);
      }
    }
    const std::vector<double> direct = oracle::softmax_neg(d2);
    const ImitationTarget y = imitation_targets(human, centers);
    std::size_t arg = 0;
    for (std::size_t i = 0; i < k; ++i) {
      worst = std::max(worst, std::abs(y.y[i] - direct[i]));
      if (y.y[i] > y.y[arg]) arg = i;
    }
    const auto nearest = static_cast<std::size_t>(std::min_element(d2.begin(), d2.end()) - d2.begin());
    argmax_miss += arg != nearest;
  }
  return {worst < 1e-9 && argmax_miss == 0,
          fmt("100 instances, max |diff| %.2e, argmax != nearest in %d", worst, argmax_miss)};
}

// ---- 5: k-means --------------------------------------------------------------

Outcome clustering()
{
  int runs = 0, increases = 0;
  for (std::size_t k : {4, 16, 64}) {
    for (std::uint64_t seed : {1, 2}) {
      KMeansOptions opt;
      opt.k = k;
      opt.iterations = 30;
      opt.seed = seed;
      const Vocabulary v = kmeans(sample_trajectories(1500, 10 + seed), opt);
      const auto & h = v.meta().sse_history;
      for (std::size_t i = 1; i < h.size(); ++i) increases += h[i] > h[i - 1];
      ++runs;
    }
  }

  // Two well separated clouds of straight lines.
  Rng rng(505);
  std::vector<Trajectory> in;
  std::array<FlatTrajectory, 2> mean{};
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 100; ++i) {
      const double v = rng.uniform(3.0, 6.0), dx = 50.0 * c + rng.uniform(-1, 1), dy = rng.uniform(-1, 1);
      const Trajectory t = test::from_fn([=](double s) { return geom::Pose(v * s + dx, dy, 0.0); });
      in.push_back(t);
      const FlatTrajectory f = flatten(t);
      for (std::size_t d = 0; d < kFlatDim; ++d) mean[c][d] += f[d] / 100.0;
    }
  }
  KMeansOptions opt;
  opt.k = 2;
  opt.seed = 7;
  const Vocabulary two = kmeans(in, opt);
  double err = 0.0;
  std::set<int> clouds;
  for (const auto & c : two.trajectories()) {
    const FlatTrajectory f = flatten(c);
    const int cloud = f[0] > 25.0 ? 1 : 0;
    clouds.insert(cloud);
    for (std::size_t d = 0; d < kFlatDim; ++d) err = std::max(err, std::abs(f[d] - mean[cloud][d]));
  }
  const bool ok = increases == 0 && clouds.size() == 2 && err < 1e-6;
  return {ok, fmt("%d runs, %d SSE increases; two-cloud centers within %.2e of the cloud means", runs, increases, err)};
}

// ---- 6: teacher trivial suite --------------------------------------------------

Outcome teachers()
{
  const TeacherConfig cfg;
  const Scenario empty = test::straight_scene();
  const std::vector<Trajectory> plans{
    test::straight(5.0), test::straight(0.0), test::arc(6.0, 25.0), test::straight(12.0, 1.0)};
  int wrong = 0;
  for (const auto & t : plans) {
    wrong += score_nc(t, empty, cfg) != 1.0;
    wrong += score_ttc(t, empty, cfg) != 1.0;
    wrong += score_tl(t, empty, cfg) != 1.0;
  }

  Scenario blocked = test::straight_scene();
  blocked.agents = {test::agent("parked", 10.0, 0.0, 0.0, 0.0)};
  wrong += score_nc(test::straight(5.0), blocked, cfg) != 0.0;
  Scenario oncoming = test::straight_scene();
  oncoming.agents = {test::agent("oncoming", 40.0, 0.0, std::numbers::pi, 8.0)};
  wrong += score_nc(test::straight(8.0), oncoming, cfg) != 0.0;

  // The same world motion predicted from two frames 0.5 s apart, and a literally repeated plan.
  const EgoState ego;
  const Trajectory cruise = test::straight(7.0);
  wrong += score_ec(cruise, cruise, geom::RigidTransform{-3.5, 0.0, 0.0}, ego, cfg) != 1.0;
  wrong += score_ec(cruise, cruise, geom::RigidTransform{}, ego, cfg) != 1.0;
  auto world = [](double t) {
    const double r = 40.0, v = 6.0;
    return geom::Pose(r * std::sin(v * t / r), r * (1.0 - std::cos(v * t / r)), v * t / r);
  };
  const geom::RigidTransform to_curr = geom::RigidTransform::to_local(world(0.5));
  const Trajectory prev = test::from_fn(world);
  const Trajectory curr = test::from_fn([&](double t) { return to_curr.apply(world(t + 0.5)); });
  wrong += score_ec(curr, prev, to_curr, ego, cfg) != 1.0;

  const Scenario corridor = test::straight_scene(12.0);
  wrong += score_dac(test::straight(5.0, 20.0), corridor, cfg) != 0.0;
  wrong += score_dac(test::from_fn([](double t) { return geom::Pose(5.0 * t, 3.0 * t, 0.0); }), corridor, cfg) != 0.0;
  wrong += score_dac(test::straight(5.0), corridor, cfg) != 1.0;
  return {wrong == 0, fmt("%d of 21 exact checks wrong", wrong)};
}

// ---- 7-9: end to end -----------------------------------------------------------

struct Stage
{
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path vocab() const { return root / "vocab.json"; }
  fs::path scores() const { return root / "scores"; }
  fs::path model(const std::string & tag) const { return root / ("model_" + tag + ".json"); }
  fs::path weights(const std::string & tag) const { return root / ("weights_" + tag + ".json"); }
  fs::path bench(const std::string & tag) const { return root / ("bench_" + tag); }
};

constexpr std::uint64_t kGenSeed = 7;
constexpr std::uint64_t kVocabSeed = 3;
constexpr std::array<std::uint64_t, 3> kTrainSeeds{1, 2, 3};

void prepare(const Stage & s, int jobs)
{
  pl::GenArgs g;
  g.count = 200;
  g.seed = kGenSeed;
  g.out = s.data();
  g.split = std::array<std::size_t, 3>{150, 25, 25};
  g.jobs = jobs;
  pl::gen(g);
  pl::VocabArgs v;
  v.samples = 20000;
  v.k = 256;
  v.iters = 50;
  v.seed = kVocabSeed;
  v.out = s.vocab();
  v.jobs = jobs;
  pl::vocab(v);
  pl::TeachArgs t;
  t.scenarios = s.data() / "manifest.json";
  t.vocab = s.vocab();
  t.out = s.scores();
  t.jobs = jobs;
  pl::teach(t);
}

json run_model(const Stage & s, const std::string & tag, std::uint64_t seed, const std::vector<std::string> & ablate,
               const std::optional<std::string> & compare)
{
  pl::TrainArgs tr;
  tr.scenarios = s.data() / "train.json";
  tr.scores = s.scores();
  tr.vocab = s.vocab();
  tr.epochs = 20;
  tr.seed = seed;
  tr.ablate = ablate;
  tr.out = s.model(tag);
  pl::train(tr);
  pl::CalibrateArgs c;
  c.model = s.model(tag);
  c.scenarios = s.data() / "val.json";
  c.out = s.weights(tag);
  pl::calibrate(c);
  pl::BenchmarkArgs b;
  b.model = s.model(tag);
  b.weights = s.weights(tag);
  b.scenarios = s.data() / "test.json";
  b.out = s.bench(tag);
  b.compare = compare;
  return pl::benchmark(b);
}

json read_json(const fs::path & p)
{
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_bytes(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome end_to_end(const Stage & s)
{
  const json report = read_json(s.bench("seed1") / "report.json");
  const json model = read_json(s.model("seed1"));
  const double final_kd = model["training_log"].back()["loss_kd"].get<double>();
  const double baseline = 8.0 * std::numbers::ln2;
  const double drop = 1.0 - final_kd / baseline;
  const double cal = report["runs"]["calibrated"]["aggregate_percent"]["EPDMS"].get<double>();
  const double imit = report["runs"]["imitation-only"]["aggregate_percent"]["EPDMS"].get<double>();
  const double uni = report["runs"]["uniform"]["aggregate_percent"]["EPDMS"].get<double>();
  const bool a = drop >= 0.2, b = cal - imit >= 1.0, c = cal >= uni;
  return {a && b && c,
          fmt("(a) final distillation BCE %.4f vs 8 ln 2 = %.4f, %.1f%% lower [%s]; (b) test EPDMS calibrated %.2f vs "
              "imitation-only %.2f [%s]; (c) uniform %.2f [%s]",
              final_kd, baseline, 100.0 * drop, a ? "ok" : "no", cal, imit, b ? "ok" : "no", uni, c ? "ok" : "no")};
}

int shell(const std::string & cmd)
{
  const int rc = std::system((cmd + " > /dev/null").c_str());
  if (rc != 0) throw std::runtime_error("command failed (" + std::to_string(rc) + "): " + cmd);
  return rc;
}

Outcome determinism(const Stage & reference, const fs::path & cli, const fs::path & root)
{
  const std::string exe = cli.string();
  const Stage s{root};
  const std::string j = " --jobs 3";
  auto q = [](const fs::path & p) { return "'" + p.string() + "'"; };
  shell(exe + " gen --count 200 --seed " + std::to_string(kGenSeed) + " --split 150,25,25 --out " + q(s.data()) + j);
  shell(exe + " vocab --samples 20000 --k 256 --iters 50 --seed " + std::to_string(kVocabSeed) + " --out " +
        q(s.vocab()) + j);
  shell(exe + " teach --scenarios " + q(s.data() / "manifest.json") + " --vocab " + q(s.vocab()) + " --out " +
        q(s.scores()) + j);
  shell(exe + " train --scenarios " + q(s.data() / "train.json") + " --scores " + q(s.scores()) + " --vocab " +
        q(s.vocab()) + " --epochs 20 --seed 1 --out " + q(s.model("seed1")) + j);
  shell(exe + " calibrate --model " + q(s.model("seed1")) + " --scenarios " + q(s.data() / "val.json") + " --out " +
        q(s.weights("seed1")) + j);
  shell(exe + " benchmark --model " + q(s.model("seed1")) + " --weights " + q(s.weights("seed1")) + " --scenarios " +
        q(s.data() / "test.json") + " --out " + q(s.bench("seed1")) + " --compare imitation-only,uniform" + j);

  std::vector<std::pair<std::string, fs::path>> files{
    {"report.json", fs::path("bench_seed1") / "report.json"},
    {"report.csv", fs::path("bench_seed1") / "report.csv"},
    {"model", "model_seed1.json"},
    {"weights", "weights_seed1.json"},
    {"vocab", "vocab.json"},
  };
  std::string differing;
  for (const auto & [name, rel] : files) {
    const std::string a = read_bytes(reference.root / rel), b = read_bytes(root / rel);
    if (a.empty() || a != b) differing += " " + name;
  }
  return {differing.empty(), differing.empty() ? "jobs 1 vs jobs 3: report.json, report.csv, model, weights and "
                                                 "vocabulary byte-identical"
                                               : "differs:" + differing};
}

double extended_sum(const json & report, const char * run)
{
  const json & a = report["runs"][run]["aggregate_percent"];
  return a["DDC"].get<double>() + a["LK"].get<double>() + a["TL"].get<double>();
}

Outcome ablation(const Stage & s)
{
  double with = 0.0, without = 0.0, with_uniform = 0.0, without_uniform = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : kTrainSeeds) {
    const std::string tag = "seed" + std::to_string(seed);
    const json full = seed == kTrainSeeds[0] ? read_json(s.bench(tag) / "report.json")
                                             : run_model(s, tag, seed, {}, "uniform");
    const json abl = run_model(s, tag + "_ablated", seed, {"TL", "DDC", "LK"}, "uniform");
    with += extended_sum(full, "calibrated") / 3.0;
    without += extended_sum(abl, "calibrated") / 3.0;
    with_uniform += extended_sum(full, "uniform") / 3.0;
    without_uniform += extended_sum(abl, "uniform") / 3.0;
    per_seed += fmt(" seed %llu %.1f/%.1f;", static_cast<unsigned long long>(seed), extended_sum(full, "calibrated"),
                    extended_sum(abl, "calibrated"));
  }
  return {with - without >= 0.0,
          fmt("mean test DDC+LK+TL with calibrated weights (percent points, max 300): enabled %.2f vs ablated %.2f, "
              "difference %+.2f;",
              with, without, with - without) +
            per_seed +
            fmt(" with uniform weights (diagnostic): enabled %.2f vs ablated %.2f", with_uniform, without_uniform)};
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Acceptance runner"};
  fs::path cli;
  fs::path work;
  std::vector<int> only;
  bool keep = false;
  app.add_option("--cli", cli, "path to the hmdp command-line tool")->required();
  app.add_option("--work", work, "scratch directory (a temporary one by default)");
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  app.add_flag("--keep", keep, "keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  const bool temp = work.empty();
  if (temp) work = fs::temp_directory_path() / ("hmdp_acceptance_" + std::to_string(std::random_device{}()));
  fs::remove_all(work);
  fs::create_directories(work);
  const Stage main_stage{work / "jobs1"};
  bool prepared = false;
  auto ensure_main = [&] {
    if (prepared) return;
    prepare(main_stage, 1);
    run_model(main_stage, "seed1", kTrainSeeds[0], {}, "imitation-only,uniform");
    prepared = true;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    {"aggregate formulas", formulas},
    {"box overlap vs sampling oracle", geometry},
    {"gradient check", gradients},
    {"imitation targets", imitation},
    {"k-means properties", clustering},
    {"teacher trivial suite", teachers},
    {"end-to-end selection",
     [&] {
       ensure_main();
       return end_to_end(main_stage);
     }},
    {"determinism across job counts",
     [&] {
       ensure_main();
       return determinism(main_stage, fs::absolute(cli), work / "jobs3");
     }},
    {"extended-head ablation",
     [&] {
       ensure_main();
       return ablation(main_stage);
     }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception & e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << "CRITERION " << number << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first
              << "] " << o.detail << fmt(" (%.1f s)", secs) << std::endl;
  }
  if (temp && !keep) fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
