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

#include "hmdp/infer.hpp"
#include "hmdp/rng.hpp"

#include <cmath>

using namespace hmdp;

namespace
{

ForwardOutput make_output(const std::vector<double> & probs, const Matrix & scores)
{
  ForwardOutput out;
  out.im_logits.resize(static_cast<Eigen::Index>(probs.size()));
  for (std::size_t i = 0; i < probs.size(); ++i) out.im_logits(static_cast<Eigen::Index>(i)) = std::log(probs[i]);
  out.metric_scores = scores;
  out.metric_logits = scores.unaryExpr([](double s) { return std::log(s / (1.0 - s)); });
  return out;
}

ForwardOutput random_output(std::size_t k, Rng & rng)
{
  ForwardOutput out;
  out.im_logits.resize(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < out.im_logits.size(); ++i) out.im_logits(i) = rng.uniform(-3, 3);
  out.metric_scores.resize(static_cast<Eigen::Index>(k), 8);
  for (Eigen::Index i = 0; i < out.metric_scores.size(); ++i) out.metric_scores.data()[i] = rng.uniform(0.01, 0.999);
  out.metric_logits = out.metric_scores;
  return out;
}

InferenceWeights random_weights(Rng & rng)
{
  std::array<double, 6> v{};
  for (auto & x : v) x = rng.bernoulli(0.2) ? 0.0 : rng.uniform(0.0, 5.0);
  v[0] = rng.uniform(0.1, 5.0);
  return InferenceWeights::from_values(v);
}

/// Direct evaluation of the cost formula for one candidate.
double reference_cost(const ForwardOutput & out, Eigen::Index i, const InferenceWeights & w)
{
  const Eigen::VectorXd p = out.im_probs();
  auto s = [&](Metric m) { return std::clamp(out.metric_scores(i, static_cast<Eigen::Index>(idx(m))), 1e-6, 1.0); };
  const double weighted = (5 * s(Metric::EP) + 5 * s(Metric::TTC) + 2 * s(Metric::C) + 5 * s(Metric::LK)) / 17.0;
  return -(w.k_im * std::log(std::clamp(p(i), 1e-6, 1.0)) + w.k_nc * std::log(s(Metric::NC)) +
           w.k_dac * std::log(s(Metric::DAC)) + w.k_ddc * std::log(s(Metric::DDC)) + w.k_tl * std::log(s(Metric::TL)) +
           w.k_w * std::log(weighted));
}

struct GridFixture
{
  Vocabulary vocab;
  std::vector<FramePair> pairs;
  StudentModel model;
  TeacherConfig cfg;

  GridFixture()
  {
    KMeansOptions opt;
    opt.k = 12;
    opt.seed = 2;
    opt.iterations = 10;
    vocab = kmeans(sample_trajectories(300, 4), opt);
    pairs = generate_scenarios(6, 17, TemplateMix::uniform());
    StudentConfig sc;
    sc.d_model = 8;
    sc.vocab_hidden = 8;
    model = StudentModel(sc, 3);
  }
};

}  // namespace

TEST_CASE("assembled cost: hand-evaluated example")
{
  Matrix scores = Matrix::Constant(2, 8, 0.5);
  scores(0, 0) = 0.9;
  scores(1, 0) = 0.99;
  const ForwardOutput out = make_output({0.6, 0.4}, scores);
  const InferenceWeights w = InferenceWeights::from_values({1, 1, 0, 0, 0, 0});
  const SelectionResult r = assembled_cost(out, w);
  CHECK(r.costs[0] == doctest::Approx(0.6162).epsilon(1e-4));
  CHECK(r.costs[1] == doctest::Approx(0.9264).epsilon(1e-4));
  CHECK(r.costs[0] == doctest::Approx(-std::log(0.6) - std::log(0.9)).epsilon(1e-12));
  CHECK(r.chosen_index == 0);
}

TEST_CASE("assembled cost matches the direct formula")
{
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const ForwardOutput out = random_output(7, rng);
    const InferenceWeights w = random_weights(rng);
    const SelectionResult r = assembled_cost(out, w);
    for (Eigen::Index i = 0; i < 7; ++i) {
      CHECK(r.costs[static_cast<std::size_t>(i)] == doctest::Approx(reference_cost(out, i, w)).epsilon(1e-12));
    }
  }
}

TEST_CASE("equal scores tie to index 0 and clamping keeps costs finite")
{
  const ForwardOutput out = make_output({0.25, 0.25, 0.25, 0.25}, Matrix::Constant(4, 8, 0.7));
  const SelectionResult r = assembled_cost(out, InferenceWeights{});
  CHECK(r.chosen_index == 0);
  for (double c : r.costs) CHECK(c == r.costs[0]);

  ForwardOutput zero = make_output({0.5, 0.5}, Matrix::Constant(2, 8, 0.5));
  zero.metric_scores(1, 0) = 0.0;
  const SelectionResult z = assembled_cost(zero, InferenceWeights{});
  CHECK(std::isfinite(z.costs[1]));
  CHECK(z.costs[1] == doctest::Approx(z.costs[0] + std::log(0.5) - std::log(1e-6)).epsilon(1e-12));
  CHECK(z.chosen_index == 0);
}

TEST_CASE("dominating candidate always costs less")
{
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix scores(2, 8);
    for (Eigen::Index c = 0; c < 8; ++c) {
      scores(1, c) = rng.uniform(0.05, 0.9);
      scores(0, c) = scores(1, c) + rng.uniform(0.01, 0.09);
    }
    const double pb = rng.uniform(0.05, 0.45);
    const ForwardOutput out = make_output({1.0 - pb, pb}, scores);
    const SelectionResult r = assembled_cost(out, random_weights(rng));
    CHECK(r.costs[0] < r.costs[1]);
  }
}

TEST_CASE("imitation-only weights select the imitation argmax")
{
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const ForwardOutput out = random_output(16, rng);
    Eigen::Index best = 0;
    out.im_probs().maxCoeff(&best);
    CHECK(assembled_cost(out, InferenceWeights::imitation_only()).chosen_index == static_cast<std::size_t>(best));
  }
}

TEST_CASE("positive rescaling of all weights keeps the selection")
{
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const ForwardOutput out = random_output(12, rng);
    const InferenceWeights w = random_weights(rng);
    const double c = rng.uniform(0.01, 100.0);
    auto v = w.values();
    for (auto & x : v) x *= c;
    CHECK(assembled_cost(out, w).chosen_index == assembled_cost(out, InferenceWeights::from_values(v)).chosen_index);
  }
}

TEST_CASE("weights validation and JSON")
{
  CHECK_THROWS_AS(InferenceWeights::from_values({0, 0, 0, 0, 0, 0}).validate(), Error);
  CHECK_THROWS_AS(InferenceWeights::from_values({1, -1, 0, 0, 0, 0}).validate(), Error);
  const InferenceWeights w = InferenceWeights::from_values({0.1, 0.3, 1, 3, 10, 0.5});
  CHECK(InferenceWeights::from_json(w.to_json()) == w);
  nlohmann::json j = w.to_json();
  j.erase("k_tl");
  CHECK_THROWS_AS(InferenceWeights::from_json(j), Error);
}

TEST_CASE("zero-head model selects index 0")
{
  StudentConfig sc;
  sc.d_model = 8;
  sc.vocab_hidden = 8;
  StudentModel m(sc, 1);
  m.zero_heads();
  KMeansOptions opt;
  opt.k = 8;
  opt.seed = 1;
  const Vocabulary v = kmeans(sample_trajectories(100, 1), opt);
  const FramePair pair = generate_pair(3, 0, Template::StraightRoad);
  const PairSelection s = select(m, vocab_inputs(v, sc), planner_inputs(pair, sc), InferenceWeights{});
  CHECK(s.curr.chosen_index == 0);
  CHECK(s.prev.chosen_index == 0);
}

TEST_CASE("grid enumeration order")
{
  GridSpec g;
  g.values = {{{1, 2}, {3}, {4}, {5}, {6}, {7, 8, 9}}};
  CHECK(g.size() == 6);
  CHECK(g.at(0).values() == std::array<double, 6>{1, 3, 4, 5, 6, 7});
  CHECK(g.at(1).values() == std::array<double, 6>{1, 3, 4, 5, 6, 8});
  CHECK(g.at(3).values() == std::array<double, 6>{2, 3, 4, 5, 6, 7});
  CHECK(GridSpec::default_grid().size() == 15625);
  const GridSpec parsed = GridSpec::from_json(nlohmann::json{{"k_im", {2.0, 4.0}}});
  CHECK(parsed.values[0] == std::vector<double>{2.0, 4.0});
  CHECK(parsed.values[1].size() == 5);
  CHECK_THROWS_AS(GridSpec::from_json(nlohmann::json{{"k_nc", {-1.0}}}), Error);
}

TEST_CASE("grid search properties")
{
  GridFixture f;
  const ScoredPairs scored = score_pairs(f.model, f.vocab, f.pairs, f.cfg, 2);

  SUBCASE("single point")
  {
    GridSpec g;
    g.values = {{{0.3}, {1}, {1}, {3}, {1}, {10}}};
    const GridResult r = grid_search(scored, f.pairs, f.vocab, g, f.cfg);
    CHECK(r.best == g.at(0));
    CHECK(r.table.size() == 1);
  }
  SUBCASE("empty grid")
  {
    GridSpec g = GridSpec::default_grid();
    g.values[2].clear();
    CHECK_THROWS_AS(grid_search(scored, f.pairs, f.vocab, g, f.cfg), Error);
  }
  SUBCASE("argmax, uniform baseline and determinism")
  {
    GridSpec g;
    for (auto & v : g.values) v = {0.1, 1.0, 10.0};
    const GridResult a = grid_search(scored, f.pairs, f.vocab, g, f.cfg, 1);
    const GridResult b = grid_search(scored, f.pairs, f.vocab, g, f.cfg, 4);
    CHECK(grid_table_csv(a) == grid_table_csv(b));
    CHECK(a.best == b.best);
    for (const auto & row : a.table) CHECK(a.best_epdms >= row.mean_epdms);

    // Post-hoc re-evaluation of the winner and the uniform point.
    auto mean_epdms = [&](const InferenceWeights & w) {
      double sum = 0.0;
      for (const auto & o : evaluate_weights(scored, f.pairs, f.vocab, w, f.cfg)) sum += epdms(o.scores);
      return sum / static_cast<double>(f.pairs.size());
    };
    CHECK(mean_epdms(a.best) == doctest::Approx(a.best_epdms).epsilon(1e-12));
    CHECK(a.best_epdms >= mean_epdms(InferenceWeights{}));

    // Ties go to the lexicographically smallest vector.
    for (const auto & row : a.table) {
      if (row.mean_epdms == a.best_epdms) CHECK(!(row.weights.values() < a.best.values()));
    }
  }
}

TEST_CASE("selection scores combine teacher rows with EC")
{
  GridFixture f;
  const ScoredPairs scored = score_pairs(f.model, f.vocab, f.pairs, f.cfg);
  const FramePair & p = f.pairs[0];
  const SubScores s = selection_scores(p, f.vocab, scored.truth[0], 3, 3, f.cfg);
  CHECK(*s.nc == scored.truth[0].at(3, Metric::NC));
  CHECK(*s.lk == scored.truth[0].at(3, Metric::LK));
  REQUIRE(s.ec.has_value());
  CHECK(*s.ec == score_ec(f.vocab[3], f.vocab[3], p.prev_to_curr, p.curr.ego, f.cfg));
}
