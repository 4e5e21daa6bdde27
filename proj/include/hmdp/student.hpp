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

#include "hmdp/teachers.hpp"
#include "hmdp/vocab.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hmdp
{

using Matrix = Eigen::MatrixXd;

// ---- scene tokens ----------------------------------------------------------

enum class TokenType : int { Ego = 0, Agent, Lane, Route, Signal, Boundary };
inline constexpr std::size_t kTokenTypes = 6;
/// Raw token width: type one-hot plus ten scalar features.
inline constexpr std::size_t kTokenDim = 16;

/// Column layout after the one-hot block.
namespace feat
{
inline constexpr int x = 6;
inline constexpr int y = 7;
inline constexpr int cos_h = 8;
inline constexpr int sin_h = 9;
inline constexpr int speed = 10;
inline constexpr int length = 11;
inline constexpr int width = 12;
inline constexpr int red_now = 13;
inline constexpr int red_left = 14;
inline constexpr int frame = 15;
}  // namespace feat

struct EncoderSettings
{
  double position_scale = 50.0;
  double speed_scale = 10.0;
  double size_scale = 5.0;
  /// Lane, route and boundary samples are kept inside this box (ego frame).
  double window_back = 10.0;
  double window_front = 80.0;
  double window_side = 40.0;
  double lane_spacing = 10.0;
  double boundary_spacing = 8.0;
};

struct SceneTokens
{
  Matrix tokens;  // n x kTokenDim
  std::vector<TokenType> types;
  /// Rows [0, n_current) belong to the current frame; later rows are the
  /// preceding frame and receive no gradient.
  std::size_t n_current = 0;

  std::size_t size() const { return types.size(); }
};

/// Current frame only.
SceneTokens encode_scene(const Scenario & scn, const EncoderSettings & s = {});
/// Current frame plus the preceding frame moved into the current frame and tagged.
SceneTokens encode_scene(
  const Scenario & curr, const Scenario & prev, const geom::RigidTransform & prev_to_curr,
  const EncoderSettings & s = {});

/// Velocity, acceleration, lateral command (+1 left, -1 right) and lane-change flag.
using EgoFeatures = std::array<double, 4>;
EgoFeatures ego_features(const EgoState & ego);

// ---- model -----------------------------------------------------------------

struct StudentConfig
{
  int d_model = 64;
  int vocab_hidden = 128;
  int encoder_layers = 1;
  int decoder_layers = 1;
  /// Per-dimension scale applied to the flattened vocabulary (x, y, heading).
  std::array<double, 3> input_scale{30.0, 10.0, 1.0};
  /// Distillation heads that receive a loss; disabled heads stay at their initialization.
  std::array<bool, kNumDistillMetrics> metric_enabled{true, true, true, true, true, true, true, true};
  bool temporal_tokens = true;
  EncoderSettings encoder;

  void validate() const;
  nlohmann::json to_json() const;
  static StudentConfig from_json(const nlohmann::json & j);
};

struct AttentionParams
{
  Matrix wq, wk, wv, wo;
};

struct FeedForwardParams
{
  Matrix w1, b1, w2, b2;
};

/// All trainable blocks. `visit` walks them in a fixed order with stable names.
struct StudentParams
{
  Matrix vocab_w1, vocab_b1, vocab_w2, vocab_b2;
  std::vector<AttentionParams> enc_attn;
  std::vector<FeedForwardParams> enc_ff;
  Matrix ego_w, ego_b;
  Matrix scene_w, scene_b;
  std::vector<AttentionParams> dec_attn;
  std::vector<FeedForwardParams> dec_ff;
  /// Column 0 is the imitation logit, columns 1..8 the metric logits.
  Matrix head_w, head_b;

  template <class Fn>
  void visit(Fn && fn)
  {
    fn("vocab_w1", vocab_w1);
    fn("vocab_b1", vocab_b1);
    fn("vocab_w2", vocab_w2);
    fn("vocab_b2", vocab_b2);
    for (std::size_t l = 0; l < enc_attn.size(); ++l) {
      const std::string p = "enc" + std::to_string(l) + "_";
      fn(p + "wq", enc_attn[l].wq);
      fn(p + "wk", enc_attn[l].wk);
      fn(p + "wv", enc_attn[l].wv);
      fn(p + "wo", enc_attn[l].wo);
      fn(p + "ff_w1", enc_ff[l].w1);
      fn(p + "ff_b1", enc_ff[l].b1);
      fn(p + "ff_w2", enc_ff[l].w2);
      fn(p + "ff_b2", enc_ff[l].b2);
    }
    fn("ego_w", ego_w);
    fn("ego_b", ego_b);
    fn("scene_w", scene_w);
    fn("scene_b", scene_b);
    for (std::size_t l = 0; l < dec_attn.size(); ++l) {
      const std::string p = "dec" + std::to_string(l) + "_";
      fn(p + "wq", dec_attn[l].wq);
      fn(p + "wk", dec_attn[l].wk);
      fn(p + "wv", dec_attn[l].wv);
      fn(p + "wo", dec_attn[l].wo);
      fn(p + "ff_w1", dec_ff[l].w1);
      fn(p + "ff_b1", dec_ff[l].b1);
      fn(p + "ff_w2", dec_ff[l].w2);
      fn(p + "ff_b2", dec_ff[l].b2);
    }
    fn("head_w", head_w);
    fn("head_b", head_b);
  }
  template <class Fn>
  void visit(Fn && fn) const
  {
    const_cast<StudentParams *>(this)->visit(
      [&](const std::string & name, Matrix & m) { fn(name, static_cast<const Matrix &>(m)); });
  }

  /// Same shapes, all zeros.
  StudentParams zeros_like() const;
  void add(const StudentParams & other);
  void scale(double s);
  std::size_t count() const;
};

struct TrainingEpoch
{
  std::size_t epoch = 0;
  double loss_im = 0.0;
  double loss_kd = 0.0;
};

class StudentModel
{
public:
  StudentModel() = default;
  StudentModel(const StudentConfig & config, std::uint64_t seed);

  const StudentConfig & config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  StudentParams & params() { return params_; }
  const StudentParams & params() const { return params_; }
  std::vector<TrainingEpoch> & training_log() { return log_; }
  const std::vector<TrainingEpoch> & training_log() const { return log_; }

  /// Zero the prediction heads (uniform imitation, 0.5 metric scores).
  void zero_heads();
  /// FNV-1a of the serialized parameters.
  std::uint64_t hash() const;

private:
  StudentConfig config_;
  std::uint64_t seed_ = 0;
  StudentParams params_;
  std::vector<TrainingEpoch> log_;
};

struct ForwardOutput
{
  Eigen::VectorXd im_logits;  // k
  Matrix metric_scores;       // k x 8, sigmoid outputs
  Matrix metric_logits;       // k x 8

  /// softmax(im_logits).
  Eigen::VectorXd im_probs() const;
};

/// Scaled vocabulary input rows (k x 120).
Matrix vocab_inputs(const Vocabulary & vocab, const StudentConfig & cfg);

ForwardOutput forward(
  const StudentModel & model, const Vocabulary & vocab, const EgoState & ego, const SceneTokens & tokens);
ForwardOutput forward(
  const StudentModel & model, const Matrix & vocab_in, const EgoFeatures & ego, const SceneTokens & tokens);

double loss_imitation(const Eigen::VectorXd & im_logits, const ImitationTarget & target, double eps = 1e-6);
/// `targets` is k x 8 row-major; disabled metrics are skipped.
double loss_distill(
  const Matrix & metric_scores, std::span<const double> targets, double eps = 1e-6,
  const std::array<bool, kNumDistillMetrics> & enabled = {true, true, true, true, true, true, true, true});

/// One supervised scenario.
struct TrainSample
{
  std::string id;
  SceneTokens tokens;
  EgoFeatures ego{};
  ImitationTarget target;
  std::vector<double> scores;  // k x 8 row-major
};

TrainSample make_sample(
  const FramePair & pair, const Vocabulary & vocab, const ScoreMatrix & scores, const StudentConfig & cfg);

struct LossValue
{
  double im = 0.0;
  double kd = 0.0;
  double total() const { return im + kd; }
};

/// Mean loss over `batch` and, when `grad` is non-null, its gradient (same shapes as the params).
LossValue loss_and_grad(
  const StudentModel & model, const Matrix & vocab_in, std::span<const TrainSample * const> batch,
  double eps, StudentParams * grad, int jobs = 1);

struct TrainOptions
{
  double lr = 1e-4;
  double weight_decay = 0.0;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  double eps = 1e-6;
  int jobs = 1;
  std::function<void(const TrainingEpoch &)> on_epoch;
};

/// AdamW (beta 0.9/0.999, eps 1e-8). Throws Error(NonFiniteLoss) naming the batch.
void train(StudentModel & model, const Vocabulary & vocab, std::span<const TrainSample> data, const TrainOptions & opt);

struct GradCheckBlock
{
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  /// Entries whose every difference step flipped a ReLU unit; excluded from the error.
  std::size_t skipped_at_kinks = 0;
};

struct GradCheckReport
{
  std::vector<GradCheckBlock> blocks;
  double max_rel_error = 0.0;
  std::size_t skipped_at_kinks = 0;
};

struct GradCheckOptions
{
  double epsilon = 1e-5;
  /// Only blocks whose name starts with one of these prefixes (all when empty).
  std::vector<std::string> only;
  /// Check at most this many entries per block (all when 0), chosen with `seed`.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
  /// When a difference step switches a ReLU unit, retry with a step ten times
  /// smaller this many times before skipping the entry.
  int kink_retries = 2;
};

/// Central differences (evaluated in extended precision) against loss_and_grad;
/// relative error |a - n| / max(1e-8, |a| + |n|).
GradCheckReport grad_check(
  const StudentModel & model, const Matrix & vocab_in, std::span<const TrainSample> batch,
  const GradCheckOptions & opt = {});

nlohmann::json model_to_json(const StudentModel & model);
StudentModel model_from_json(const nlohmann::json & j);

}  // namespace hmdp
