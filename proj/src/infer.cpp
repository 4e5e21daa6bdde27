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

#include "hmdp/infer.hpp"

#include "hmdp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace hmdp
{

using nlohmann::json;

InferenceWeights InferenceWeights::from_values(const std::array<double, 6> & v)
{
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

void InferenceWeights::validate() const
{
  const auto v = values();
  bool any = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || v[i] < 0.0) {
      throw Error(ErrorKind::InvalidArgument, "inference weights must be finite and non-negative", kNames[i]);
    }
    any = any || v[i] > 0.0;
  }
  if (!any) throw Error(ErrorKind::InvalidArgument, "at least one inference weight must be positive", "weights");
}

json InferenceWeights::to_json() const
{
  json j = json::object();
  const auto v = values();
  for (std::size_t i = 0; i < v.size(); ++i) j[kNames[i]] = v[i];
  return j;
}

InferenceWeights InferenceWeights::from_json(const json & j)
{
  std::array<double, 6> v{};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!j.contains(kNames[i]) || !j[kNames[i]].is_number()) {
      throw Error(ErrorKind::Schema, std::string("weights need a number '") + kNames[i] + "'", kNames[i]);
    }
    v[i] = j[kNames[i]].get<double>();
  }
  const InferenceWeights w = from_values(v);
  w.validate();
  return w;
}

Matrix cost_terms(const ForwardOutput & out, double eps, const WeightedTermWeights & mw)
{
  const Eigen::Index k = out.im_logits.size();
  if (out.metric_scores.rows() != k || out.metric_scores.cols() != static_cast<Eigen::Index>(kNumDistillMetrics)) {
    throw Error(ErrorKind::ShapeMismatch, "metric scores must be k x 8", "scores");
  }
  auto clamp = [eps](double s) { return std::clamp(s, eps, 1.0); };
  auto col = [](Metric m) { return static_cast<Eigen::Index>(idx(m)); };
  const Eigen::VectorXd p = out.im_probs();
  const double total = mw.ep + mw.ttc + mw.c + mw.lk;
  Matrix t(k, 6);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto s = [&](Metric m) { return clamp(out.metric_scores(i, col(m))); };
    const double weighted =
      (mw.ep * s(Metric::EP) + mw.ttc * s(Metric::TTC) + mw.c * s(Metric::C) + mw.lk * s(Metric::LK)) / total;
    t(i, 0) = -std::log(clamp(p(i)));
    t(i, 1) = -std::log(s(Metric::NC));
    t(i, 2) = -std::log(s(Metric::DAC));
    t(i, 3) = -std::log(s(Metric::DDC));
    t(i, 4) = -std::log(s(Metric::TL));
    t(i, 5) = -std::log(clamp(weighted));
  }
  return t;
}

std::size_t argmin_first(std::span<const double> values)
{
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "argmin of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

namespace
{

std::size_t select_index(const Matrix & terms, const std::array<double, 6> & w, std::vector<double> & costs)
{
  const auto k = static_cast<std::size_t>(terms.rows());
  costs.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    double c = 0.0;
    for (Eigen::Index j = 0; j < 6; ++j) {
      if (w[static_cast<std::size_t>(j)] != 0.0) c += w[static_cast<std::size_t>(j)] * terms(static_cast<Eigen::Index>(i), j);
    }
    costs[i] = c;
  }
  return argmin_first(costs);
}

}  // namespace

SelectionResult select_from_terms(const Matrix & terms, const InferenceWeights & w)
{
  w.validate();
  SelectionResult r;
  r.terms = terms;
  r.chosen_index = select_index(terms, w.values(), r.costs);
  return r;
}

SelectionResult assembled_cost(
  const ForwardOutput & out, const InferenceWeights & w, double eps, const WeightedTermWeights & mw)
{
  return select_from_terms(cost_terms(out, eps, mw), w);
}

PlannerInputs planner_inputs(const FramePair & pair, const StudentConfig & cfg)
{
  PlannerInputs in;
  in.curr_tokens = cfg.temporal_tokens ? encode_scene(pair.curr, pair.prev, pair.prev_to_curr, cfg.encoder)
                                       : encode_scene(pair.curr, cfg.encoder);
  in.curr_ego = ego_features(pair.curr.ego);
  in.prev_tokens = encode_scene(pair.prev, cfg.encoder);
  in.prev_ego = ego_features(pair.prev.ego);
  return in;
}

PairSelection select(
  const StudentModel & model, const Matrix & vocab_in, const PlannerInputs & in, const InferenceWeights & w,
  double eps)
{
  return {
    assembled_cost(forward(model, vocab_in, in.curr_ego, in.curr_tokens), w, eps),
    assembled_cost(forward(model, vocab_in, in.prev_ego, in.prev_tokens), w, eps),
  };
}

ScoredPairs score_pairs(
  const StudentModel & model, const Vocabulary & vocab, std::span<const FramePair> pairs,
  const TeacherConfig & cfg, int jobs)
{
  const Matrix vin = vocab_inputs(vocab, model.config());
  ScoredPairs out;
  out.curr_terms.resize(pairs.size());
  out.prev_terms.resize(pairs.size());
  out.truth.resize(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const PlannerInputs in = planner_inputs(pairs[i], model.config());
    out.curr_terms[i] = cost_terms(forward(model, vin, in.curr_ego, in.curr_tokens), cfg.log_clamp_eps);
    out.prev_terms[i] = cost_terms(forward(model, vin, in.prev_ego, in.prev_tokens), cfg.log_clamp_eps);
    out.truth[i] = teach_scenario(pairs[i].curr, vocab, cfg);
  });
  return out;
}

SubScores selection_scores(
  const FramePair & pair, const Vocabulary & vocab, const ScoreMatrix & truth, std::size_t curr_index,
  std::size_t prev_index, const TeacherConfig & cfg)
{
  SubScores s = truth.row_scores(curr_index);
  s.ec = score_ec(vocab[curr_index], vocab[prev_index], pair.prev_to_curr, pair.curr.ego, cfg);
  return s;
}

std::vector<PairOutcome> evaluate_weights(
  const ScoredPairs & scored, std::span<const FramePair> pairs, const Vocabulary & vocab,
  const InferenceWeights & w, const TeacherConfig & cfg, int jobs)
{
  w.validate();
  std::vector<PairOutcome> out(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    std::vector<double> costs;
    out[i].curr_index = select_index(scored.curr_terms[i], w.values(), costs);
    out[i].prev_index = select_index(scored.prev_terms[i], w.values(), costs);
    out[i].scores = selection_scores(pairs[i], vocab, scored.truth[i], out[i].curr_index, out[i].prev_index, cfg);
  });
  return out;
}

// ---- grid search -----------------------------------------------------------

GridSpec GridSpec::default_grid()
{
  GridSpec g;
  for (auto & v : g.values) v = {0.1, 0.3, 1.0, 3.0, 10.0};
  return g;
}

GridSpec GridSpec::from_json(const json & j)
{
  if (!j.is_object()) throw Error(ErrorKind::Schema, "grid must be an object of value lists", "grid");
  GridSpec g = default_grid();
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const char * name = InferenceWeights::kNames[i];
    if (!j.contains(name)) continue;
    const json & list = j[name];
    if (!list.is_array()) throw Error(ErrorKind::Schema, "grid entry must be a list", name);
    g.values[i].clear();
    for (const auto & v : list) {
      if (!v.is_number() || !std::isfinite(v.get<double>()) || v.get<double>() < 0.0) {
        throw Error(ErrorKind::Schema, "grid values must be non-negative numbers", name);
      }
      g.values[i].push_back(v.get<double>());
    }
  }
  return g;
}

json GridSpec::to_json() const
{
  json j = json::object();
  for (std::size_t i = 0; i < values.size(); ++i) j[InferenceWeights::kNames[i]] = values[i];
  return j;
}

std::size_t GridSpec::size() const
{
  std::size_t n = 1;
  for (const auto & v : values) n *= v.size();
  return n;
}

InferenceWeights GridSpec::at(std::size_t index) const
{
  std::array<double, 6> w{};
  for (std::size_t d = values.size(); d-- > 0;) {
    w[d] = values[d][index % values[d].size()];
    index /= values[d].size();
  }
  return InferenceWeights::from_values(w);
}

GridResult grid_search(
  const ScoredPairs & scored, std::span<const FramePair> pairs, const Vocabulary & vocab, const GridSpec & grid,
  const TeacherConfig & cfg, int jobs)
{
  const std::size_t n_points = grid.size();
  if (n_points == 0) throw Error(ErrorKind::EmptyGrid, "grid has no points", "grid");
  if (pairs.empty()) throw Error(ErrorKind::InsufficientData, "grid search needs validation pairs", "scenarios");
  const std::size_t n_pairs = pairs.size();

  // Selections for every grid point and pair.
  std::vector<std::size_t> sel_curr(n_points * n_pairs);
  std::vector<std::size_t> sel_prev(n_points * n_pairs);
  std::vector<char> valid(n_points, 1);
  parallel_for(n_points, jobs, [&](std::size_t g) {
    const InferenceWeights w = grid.at(g);
    const auto v = w.values();
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
      valid[g] = 0;
      return;
    }
    std::vector<double> costs;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      sel_curr[g * n_pairs + p] = select_index(scored.curr_terms[p], v, costs);
      sel_prev[g * n_pairs + p] = select_index(scored.prev_terms[p], v, costs);
    }
  });

  // EC for each distinct (pair, current, preceding) selection.
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>;
  std::vector<Key> keys;
  keys.reserve(n_points * n_pairs);
  for (std::size_t g = 0; g < n_points; ++g) {
    if (!valid[g]) continue;
    for (std::size_t p = 0; p < n_pairs; ++p) keys.emplace_back(p, sel_curr[g * n_pairs + p], sel_prev[g * n_pairs + p]);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<double> ec(keys.size());
  parallel_for(keys.size(), jobs, [&](std::size_t i) {
    const auto [p, c, q] = keys[i];
    ec[i] = score_ec(vocab[c], vocab[q], pairs[p].prev_to_curr, pairs[p].curr.ego, cfg);
  });

  GridResult result;
  result.table.resize(n_points);
  parallel_for(n_points, jobs, [&](std::size_t g) {
    GridRow & row = result.table[g];
    row.weights = grid.at(g);
    if (!valid[g]) {
      row.mean_epdms = row.mean_pdms = std::nan("");
      return;
    }
    double sum_e = 0.0;
    double sum_p = 0.0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const std::size_t c = sel_curr[g * n_pairs + p];
      const Key key{p, c, sel_prev[g * n_pairs + p]};
      const auto it = std::lower_bound(keys.begin(), keys.end(), key);
      SubScores s = scored.truth[p].row_scores(c);
      s.ec = ec[static_cast<std::size_t>(it - keys.begin())];
      sum_e += epdms(s);
      sum_p += pdms(s);
    }
    row.mean_epdms = sum_e / static_cast<double>(n_pairs);
    row.mean_pdms = sum_p / static_cast<double>(n_pairs);
  });

  bool found = false;
  for (const GridRow & row : result.table) {
    if (std::isnan(row.mean_epdms)) continue;
    const bool better = !found || row.mean_epdms > result.best_epdms ||
                        (row.mean_epdms == result.best_epdms && row.weights.values() < result.best.values());
    if (better) {
      result.best = row.weights;
      result.best_epdms = row.mean_epdms;
      found = true;
    }
  }
  if (!found) throw Error(ErrorKind::EmptyGrid, "grid has no point with a positive weight", "grid");
  return result;
}

std::string grid_table_csv(const GridResult & result)
{
  std::ostringstream os;
  os.precision(17);
  for (const char * name : InferenceWeights::kNames) os << name << ',';
  os << "mean_epdms,mean_pdms\n";
  for (const GridRow & row : result.table) {
    for (double v : row.weights.values()) os << v << ',';
    os << row.mean_epdms << ',' << row.mean_pdms << '\n';
  }
  return os.str();
}

}  // namespace hmdp
