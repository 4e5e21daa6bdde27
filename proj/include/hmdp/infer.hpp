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

#include "hmdp/student.hpp"
#include "hmdp/teachers.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace hmdp
{

/// Confidence coefficients of the selection cost.
struct InferenceWeights
{
  double k_im = 1.0;
  double k_nc = 1.0;
  double k_dac = 1.0;
  double k_ddc = 1.0;
  double k_tl = 1.0;
  double k_w = 1.0;

  static constexpr std::array<const char *, 6> kNames{"k_im", "k_nc", "k_dac", "k_ddc", "k_tl", "k_w"};

  std::array<double, 6> values() const { return {k_im, k_nc, k_dac, k_ddc, k_tl, k_w}; }
  static InferenceWeights from_values(const std::array<double, 6> & v);
  static InferenceWeights imitation_only() { return from_values({1.0, 0.0, 0.0, 0.0, 0.0, 0.0}); }

  /// Non-negative, finite and not all zero.
  void validate() const;
  nlohmann::json to_json() const;
  static InferenceWeights from_json(const nlohmann::json & j);

  friend bool operator==(const InferenceWeights &, const InferenceWeights &) = default;
};

/// Weights of the predicted scores inside the weighted term (EC has no head).
struct WeightedTermWeights
{
  double ep = 5.0;
  double ttc = 5.0;
  double c = 2.0;
  double lk = 5.0;
};

/// Per-candidate negative log terms, k x 6 in InferenceWeights order:
/// -ln S_im, -ln S_nc, -ln S_dac, -ln S_ddc, -ln S_tl, -ln(weighted average).
/// Scores are clamped to [eps, 1] first.
Matrix cost_terms(const ForwardOutput & out, double eps = 1e-6, const WeightedTermWeights & mw = {});

struct SelectionResult
{
  std::size_t chosen_index = 0;
  std::vector<double> costs;
  Matrix terms;  // k x 6, see cost_terms
};

/// Index of the smallest value; the lowest index wins ties.
std::size_t argmin_first(std::span<const double> values);

SelectionResult select_from_terms(const Matrix & terms, const InferenceWeights & w);
SelectionResult assembled_cost(
  const ForwardOutput & out, const InferenceWeights & w, double eps = 1e-6, const WeightedTermWeights & mw = {});

/// Model inputs for both frames of a pair. The preceding frame is planned on its
/// own tokens since its own predecessor is not available.
struct PlannerInputs
{
  SceneTokens curr_tokens;
  EgoFeatures curr_ego{};
  SceneTokens prev_tokens;
  EgoFeatures prev_ego{};
};

PlannerInputs planner_inputs(const FramePair & pair, const StudentConfig & cfg);

struct PairSelection
{
  SelectionResult curr;
  SelectionResult prev;
};

PairSelection select(
  const StudentModel & model, const Matrix & vocab_in, const PlannerInputs & in, const InferenceWeights & w,
  double eps = 1e-6);

/// Everything needed to score any weight vector on a set of pairs without
/// running the model again: cost terms for both frames and the teacher scores
/// of every candidate in the current frame.
struct ScoredPairs
{
  std::vector<Matrix> curr_terms;
  std::vector<Matrix> prev_terms;
  std::vector<ScoreMatrix> truth;
};

ScoredPairs score_pairs(
  const StudentModel & model, const Vocabulary & vocab, std::span<const FramePair> pairs,
  const TeacherConfig & cfg, int jobs = 1);

/// Ground-truth sub-scores of the current-frame selection, EC from the pair of selections.
SubScores selection_scores(
  const FramePair & pair, const Vocabulary & vocab, const ScoreMatrix & truth, std::size_t curr_index,
  std::size_t prev_index, const TeacherConfig & cfg);

struct PairOutcome
{
  std::size_t curr_index = 0;
  std::size_t prev_index = 0;
  SubScores scores;
};

std::vector<PairOutcome> evaluate_weights(
  const ScoredPairs & scored, std::span<const FramePair> pairs, const Vocabulary & vocab,
  const InferenceWeights & w, const TeacherConfig & cfg, int jobs = 1);

/// Candidate values per weight; the grid is their Cartesian product.
struct GridSpec
{
  std::array<std::vector<double>, 6> values;

  static GridSpec default_grid();
  /// {"k_im": [..], ...}; missing keys take the default list.
  static GridSpec from_json(const nlohmann::json & j);
  nlohmann::json to_json() const;
  std::size_t size() const;
  InferenceWeights at(std::size_t index) const;
};

struct GridRow
{
  InferenceWeights weights;
  double mean_epdms = 0.0;
  double mean_pdms = 0.0;
};

struct GridResult
{
  InferenceWeights best;
  double best_epdms = 0.0;
  std::vector<GridRow> table;  // grid order
};

/// Exhaustive search maximizing mean EPDMS; ties go to the lexicographically
/// smallest weight vector. Throws Error(EmptyGrid).
GridResult grid_search(
  const ScoredPairs & scored, std::span<const FramePair> pairs, const Vocabulary & vocab, const GridSpec & grid,
  const TeacherConfig & cfg, int jobs = 1);

std::string grid_table_csv(const GridResult & result);

}  // namespace hmdp
