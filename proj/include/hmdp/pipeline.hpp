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

#include "hmdp/infer.hpp"
#include "hmdp/student.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

/// File-level commands shared by the command-line tool, the python module and
/// the acceptance runner.
namespace hmdp::pipeline
{

namespace fs = std::filesystem;

/// Removes registered outputs unless `commit()` is called.
class OutputGuard
{
public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard &) = delete;
  OutputGuard & operator=(const OutputGuard &) = delete;
  ~OutputGuard();

  /// Registers `path`; a directory is only removed when this guard created it.
  void file(const fs::path & path);
  void directory(const fs::path & path);
  void commit() { committed_ = true; }

private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

/// Exit code for an error kind: 2 schema, 3 config-hash mismatch, 4 numeric failure, 1 otherwise.
int exit_code(ErrorKind kind);
/// {"error": kind, "message": ..., "context": ...}
nlohmann::json error_json(const Error & e);

struct GenArgs
{
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::string mix = "uniform";
  fs::path out;
  /// Optional train/val/test sizes; their sum must equal `count`.
  std::optional<std::array<std::size_t, 3>> split;
  int jobs = 1;
};
/// Writes <out>/scenarios/*.json, <out>/manifest.json and, with a split,
/// <out>/{train,val,test}.json.
void gen(const GenArgs & a);

struct VocabArgs
{
  std::size_t samples = 20000;
  std::size_t k = 256;
  std::size_t iters = 50;
  std::uint64_t seed = 0;
  fs::path out;
  int jobs = 1;
};
void vocab(const VocabArgs & a);

struct TeachArgs
{
  fs::path scenarios;  // manifest
  fs::path vocab;
  std::optional<fs::path> config;
  fs::path out;  // directory
  int jobs = 1;
};
/// Scores the current frame of every pair: <out>/<id>.bin (+ .json sidecar) and
/// <out>/teacher_config.json.
void teach(const TeachArgs & a);

struct TrainArgs
{
  fs::path scenarios;
  fs::path scores;
  fs::path vocab;
  std::size_t epochs = 20;
  double lr = 1e-4;
  double weight_decay = 0.0;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  int d_model = 64;
  /// Metric names whose distillation heads receive no loss.
  std::vector<std::string> ablate;
  fs::path out;
  int jobs = 1;
  bool verbose = false;
};
/// Writes the model JSON with the vocabulary and teacher configuration embedded.
/// Throws Error(ConfigHashMismatch) when a score matrix was produced with a
/// different vocabulary or teacher configuration.
void train(const TrainArgs & a);

/// Trained model plus the artifacts it was trained against.
struct ModelBundle
{
  StudentModel model;
  Vocabulary vocab;
  TeacherConfig teacher;
  nlohmann::json training;
};
ModelBundle load_model(const fs::path & path);

struct CalibrateArgs
{
  fs::path model;
  fs::path scenarios;
  std::optional<fs::path> grid;
  fs::path out;  // weights JSON; the grid table goes next to it as <stem>_grid.csv
  int jobs = 1;
};
GridResult calibrate(const CalibrateArgs & a);

struct BenchmarkArgs
{
  fs::path model;
  fs::path weights;
  fs::path scenarios;
  fs::path out;  // directory receiving report.json and report.csv
  std::optional<std::string> compare;  // "imitation-only" or "uniform"
  int jobs = 1;
};
nlohmann::json benchmark(const BenchmarkArgs & a);

/// Per-scenario outcome table and aggregates (percent) for one weight vector.
nlohmann::json benchmark_run(
  const ScoredPairs & scored, std::span<const FramePair> pairs, const Vocabulary & vocab,
  const InferenceWeights & w, const TeacherConfig & cfg, int jobs);

struct EvalArgs
{
  fs::path scenario;
  fs::path trajectory;
  fs::path vocab;
  std::optional<fs::path> config;
};
nlohmann::json eval(const EvalArgs & a);

struct RenderArgs
{
  fs::path scenario;
  fs::path vocab;
  fs::path scores;
  std::string metric = "EPDMS";
  fs::path out;
};
void render(const RenderArgs & a);

TeacherConfig load_teacher_config(const std::optional<fs::path> & path);
std::vector<std::string> split_list(const std::string & text);

}  // namespace hmdp::pipeline
