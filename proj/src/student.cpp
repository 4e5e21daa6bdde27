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

#include "hmdp/student.hpp"

#include "hmdp/parallel.hpp"
#include "hmdp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hmdp
{

using geom::RigidTransform;
using geom::Vec2;
using nlohmann::json;
using Row = std::array<double, kTokenDim>;

// ---- scene encoding --------------------------------------------------------

namespace
{

struct TokenSink
{
  const EncoderSettings & s;
  const RigidTransform & frame;
  double frame_tag;
  std::vector<Row> rows;
  std::vector<TokenType> types;

  bool in_window(Vec2 p) const
  {
    return p.x >= -s.window_back && p.x <= s.window_front && std::abs(p.y) <= s.window_side;
  }

  Row & push(TokenType t, Vec2 p, double heading)
  {
    Row r{};
    r[static_cast<std::size_t>(t)] = 1.0;
    r[feat::x] = p.x / s.position_scale;
    r[feat::y] = p.y / s.position_scale;
    r[feat::cos_h] = std::cos(heading);
    r[feat::sin_h] = std::sin(heading);
    r[feat::frame] = frame_tag;
    rows.push_back(r);
    types.push_back(t);
    return rows.back();
  }

  void polyline(TokenType t, const geom::Polyline & line)
  {
    const double len = line.length();
    for (double sv = 0.0; sv <= len + 1e-9; sv += s.lane_spacing) {
      const geom::Pose p = frame.apply(line.pose_at(sv));
      if (in_window(p.position())) push(t, p.position(), p.heading());
    }
  }
};

void encode_into(const Scenario & scn, TokenSink & sink)
{
  const EncoderSettings & s = sink.s;
  const geom::Pose ego = sink.frame.apply(scn.ego.pose);
  Row & er = sink.push(TokenType::Ego, ego.position(), ego.heading());
  er[feat::speed] = scn.ego.velocity / s.speed_scale;
  er[feat::length] = scn.ego.length / s.size_scale;
  er[feat::width] = scn.ego.width / s.size_scale;

  for (const auto & ag : scn.agents) {
    const geom::Pose p0 = sink.frame.apply(ag.poses[0]);
    const double v = geom::norm(ag.poses[1].position() - ag.poses[0].position()) / kStepDt;
    Row & r = sink.push(TokenType::Agent, p0.position(), p0.heading());
    r[feat::speed] = v / s.speed_scale;
    r[feat::length] = ag.length / s.size_scale;
    r[feat::width] = ag.width / s.size_scale;
  }

  sink.polyline(TokenType::Route, scn.route);
  for (const auto & lane : scn.lanes) sink.polyline(TokenType::Lane, lane);

  for (const auto & sig : scn.signals) {
    const geom::Polygon region = sig.region.transformed(sink.frame);
    const geom::Aabb & b = region.bounds();
    Row & r = sink.push(TokenType::Signal, region.centroid(), 0.0);
    r[feat::length] = (b.max.x - b.min.x) / s.size_scale;
    r[feat::width] = (b.max.y - b.min.y) / s.size_scale;
    const bool red = sig.state_at(0.0) == SignalState::Red;
    r[feat::red_now] = red ? 1.0 : 0.0;
    double until_green = 0.0;
    if (red) {
      until_green = 4.0;
      for (const auto & ph : sig.phases) {
        if (ph.state == SignalState::Green && ph.end > 0.0) {
          until_green = std::min(4.0, std::max(0.0, ph.start));
          break;
        }
      }
    }
    r[feat::red_left] = until_green / 4.0;
  }

  // Drivable boundary: edge samples not covered by a neighbouring polygon.
  for (std::size_t pi = 0; pi < scn.drivable.size(); ++pi) {
    const auto & v = scn.drivable[pi].vertices();
    for (std::size_t e = 0; e < v.size(); ++e) {
      const Vec2 a = v[e];
      const Vec2 b = v[(e + 1) % v.size()];
      const double len = geom::norm(b - a);
      const double heading = std::atan2(b.y - a.y, b.x - a.x);
      for (double t = 0.0; t < len; t += s.boundary_spacing) {
        const Vec2 p = a + (t / len) * (b - a);
        const geom::Pose local = sink.frame.apply(geom::Pose(p.x, p.y, heading));
        if (!sink.in_window(local.position())) continue;
        bool interior = false;
        for (std::size_t pj = 0; pj < scn.drivable.size() && !interior; ++pj) {
          interior = pj != pi && geom::point_in_polygon(p, scn.drivable[pj]);
        }
        if (!interior) sink.push(TokenType::Boundary, local.position(), local.heading());
      }
    }
  }
}

SceneTokens to_tokens(const std::vector<Row> & rows, std::vector<TokenType> types, std::size_t n_current)
{
  SceneTokens out;
  out.tokens.resize(static_cast<Eigen::Index>(rows.size()), kTokenDim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < kTokenDim; ++c) out.tokens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  }
  out.types = std::move(types);
  out.n_current = n_current;
  return out;
}

}  // namespace

SceneTokens encode_scene(const Scenario & scn, const EncoderSettings & s)
{
  const RigidTransform frame = RigidTransform::to_local(scn.ego.pose);
  TokenSink sink{s, frame, 0.0, {}, {}};
  encode_into(scn, sink);
  const std::size_t n = sink.rows.size();
  return to_tokens(sink.rows, std::move(sink.types), n);
}

SceneTokens encode_scene(
  const Scenario & curr, const Scenario & prev, const RigidTransform & prev_to_curr, const EncoderSettings & s)
{
  const RigidTransform frame = RigidTransform::to_local(curr.ego.pose);
  TokenSink sink{s, frame, 0.0, {}, {}};
  encode_into(curr, sink);
  const std::size_t n_current = sink.rows.size();
  const RigidTransform prev_frame = frame.compose(prev_to_curr);
  TokenSink prev_sink{s, prev_frame, 1.0, std::move(sink.rows), std::move(sink.types)};
  encode_into(prev, prev_sink);
  return to_tokens(prev_sink.rows, std::move(prev_sink.types), n_current);
}

EgoFeatures ego_features(const EgoState & ego)
{
  double lateral = 0.0;
  double lane_change = 0.0;
  switch (ego.command) {
    case Command::Follow: break;
    case Command::TurnLeft: lateral = 1.0; break;
    case Command::TurnRight: lateral = -1.0; break;
    case Command::LaneChangeLeft:
      lateral = 1.0;
      lane_change = 1.0;
      break;
    case Command::LaneChangeRight:
      lateral = -1.0;
      lane_change = 1.0;
      break;
  }
  return {ego.velocity / 10.0, ego.acceleration / 2.0, lateral, lane_change};
}

// ---- configuration ---------------------------------------------------------

void StudentConfig::validate() const
{
  if (d_model < 1 || vocab_hidden < 1 || encoder_layers < 0 || decoder_layers < 0) {
    throw Error(ErrorKind::InvalidArgument, "student dimensions must be positive", "config");
  }
  for (double v : input_scale) {
    if (!(v > 0.0)) throw Error(ErrorKind::InvalidArgument, "input_scale must be positive", "config.input_scale");
  }
}

json StudentConfig::to_json() const
{
  json enabled = json::object();
  for (std::size_t m = 0; m < kNumDistillMetrics; ++m) enabled[kMetricNames[m]] = metric_enabled[m];
  return {
    {"d_model", d_model},
    {"vocab_hidden", vocab_hidden},
    {"encoder_layers", encoder_layers},
    {"decoder_layers", decoder_layers},
    {"input_scale", input_scale},
    {"metric_enabled", enabled},
    {"temporal_tokens", temporal_tokens},
    {"encoder",
     {{"position_scale", encoder.position_scale},
      {"speed_scale", encoder.speed_scale},
      {"size_scale", encoder.size_scale},
      {"window_back", encoder.window_back},
      {"window_front", encoder.window_front},
      {"window_side", encoder.window_side},
      {"lane_spacing", encoder.lane_spacing},
      {"boundary_spacing", encoder.boundary_spacing}}},
  };
}

StudentConfig StudentConfig::from_json(const json & j)
{
  StudentConfig c;
  try {
    c.d_model = j.at("d_model").get<int>();
    c.vocab_hidden = j.at("vocab_hidden").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.input_scale = j.at("input_scale").get<std::array<double, 3>>();
    for (std::size_t m = 0; m < kNumDistillMetrics; ++m) {
      c.metric_enabled[m] = j.at("metric_enabled").at(kMetricNames[m]).get<bool>();
    }
    c.temporal_tokens = j.value("temporal_tokens", true);
    if (j.contains("encoder")) {
      const json & e = j["encoder"];
      c.encoder.position_scale = e.at("position_scale").get<double>();
      c.encoder.speed_scale = e.at("speed_scale").get<double>();
      c.encoder.size_scale = e.at("size_scale").get<double>();
      c.encoder.window_back = e.at("window_back").get<double>();
      c.encoder.window_front = e.at("window_front").get<double>();
      c.encoder.window_side = e.at("window_side").get<double>();
      c.encoder.lane_spacing = e.at("lane_spacing").get<double>();
      c.encoder.boundary_spacing = e.at("boundary_spacing").get<double>();
    }
  } catch (const json::exception & e) {
    throw Error(ErrorKind::Schema, std::string("bad student config: ") + e.what(), "config");
  }
  c.validate();
  return c;
}

// ---- parameters ------------------------------------------------------------

StudentParams StudentParams::zeros_like() const
{
  StudentParams z = *this;
  z.visit([](const std::string &, Matrix & m) { m.setZero(); });
  return z;
}

void StudentParams::add(const StudentParams & other)
{
  std::vector<const Matrix *> src;
  other.visit([&](const std::string &, const Matrix & m) { src.push_back(&m); });
  std::size_t i = 0;
  visit([&](const std::string &, Matrix & m) { m += *src[i++]; });
}

void StudentParams::scale(double s)
{
  visit([&](const std::string &, Matrix & m) { m *= s; });
}

std::size_t StudentParams::count() const
{
  std::size_t n = 0;
  visit([&](const std::string &, const Matrix & m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

StudentModel::StudentModel(const StudentConfig & config, std::uint64_t seed) : config_(config), seed_(seed)
{
  config_.validate();
  const Eigen::Index d = config_.d_model;
  const Eigen::Index h = config_.vocab_hidden;
  auto attn = [&] { return AttentionParams{Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, d)}; };
  auto ff = [&] { return FeedForwardParams{Matrix(d, 2 * d), Matrix(1, 2 * d), Matrix(2 * d, d), Matrix(1, d)}; };
  auto & p = params_;
  p.vocab_w1.resize(static_cast<Eigen::Index>(kFlatDim), h);
  p.vocab_b1.resize(1, h);
  p.vocab_w2.resize(h, d);
  p.vocab_b2.resize(1, d);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    p.enc_attn.push_back(attn());
    p.enc_ff.push_back(ff());
  }
  p.ego_w.resize(4, d);
  p.ego_b.resize(1, d);
  p.scene_w.resize(static_cast<Eigen::Index>(kTokenDim), d);
  p.scene_b.resize(1, d);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    p.dec_attn.push_back(attn());
    p.dec_ff.push_back(ff());
  }
  p.head_w.resize(d, 1 + static_cast<Eigen::Index>(kNumDistillMetrics));
  p.head_b.resize(1, 1 + static_cast<Eigen::Index>(kNumDistillMetrics));

  Rng rng(seed);
  p.visit([&](const std::string &, Matrix & m) {
    if (m.rows() == 1) {
      m.setZero();
      return;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
    }
  });
}

void StudentModel::zero_heads()
{
  params_.head_w.setZero();
  params_.head_b.setZero();
}

// ---- forward / backward ----------------------------------------------------

namespace
{

constexpr Eigen::Index kHeads = 1 + static_cast<Eigen::Index>(kNumDistillMetrics);

template <class T>
using Mx = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vx = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Extended-precision copy of the parameters, used for finite differences.
template <class T>
struct WideAttention
{
  Mx<T> wq, wk, wv, wo;
};
template <class T>
struct WideFeedForward
{
  Mx<T> w1, b1, w2, b2;
};
template <class T>
struct WideParams
{
  Mx<T> vocab_w1, vocab_b1, vocab_w2, vocab_b2;
  std::vector<WideAttention<T>> enc_attn;
  std::vector<WideFeedForward<T>> enc_ff;
  Mx<T> ego_w, ego_b;
  Mx<T> scene_w, scene_b;
  std::vector<WideAttention<T>> dec_attn;
  std::vector<WideFeedForward<T>> dec_ff;
  Mx<T> head_w, head_b;
};

template <class T>
WideParams<T> widen(const StudentParams & p)
{
  auto attn = [](const AttentionParams & a) {
    return WideAttention<T>{a.wq.cast<T>(), a.wk.cast<T>(), a.wv.cast<T>(), a.wo.cast<T>()};
  };
  auto ff = [](const FeedForwardParams & f) {
    return WideFeedForward<T>{f.w1.cast<T>(), f.b1.cast<T>(), f.w2.cast<T>(), f.b2.cast<T>()};
  };
  WideParams<T> w;
  w.vocab_w1 = p.vocab_w1.cast<T>();
  w.vocab_b1 = p.vocab_b1.cast<T>();
  w.vocab_w2 = p.vocab_w2.cast<T>();
  w.vocab_b2 = p.vocab_b2.cast<T>();
  for (const auto & a : p.enc_attn) w.enc_attn.push_back(attn(a));
  for (const auto & f : p.enc_ff) w.enc_ff.push_back(ff(f));
  w.ego_w = p.ego_w.cast<T>();
  w.ego_b = p.ego_b.cast<T>();
  w.scene_w = p.scene_w.cast<T>();
  w.scene_b = p.scene_b.cast<T>();
  for (const auto & a : p.dec_attn) w.dec_attn.push_back(attn(a));
  for (const auto & f : p.dec_ff) w.dec_ff.push_back(ff(f));
  w.head_w = p.head_w.cast<T>();
  w.head_b = p.head_b.cast<T>();
  return w;
}

template <class T>
void softmax_rows(Mx<T> & m)
{
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const T mx = m.row(r).maxCoeff();
    T z = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = std::exp(m(r, c) - mx);
      z += m(r, c);
    }
    m.row(r) /= z;
  }
}

template <class T>
Mx<T> add_row(const Mx<T> & m, const Mx<T> & row)
{
  return m.rowwise() + row.row(0);
}

template <class T>
Mx<T> relu(const Mx<T> & m)
{
  return m.cwiseMax(T(0));
}

template <class T>
struct AttnCache
{
  Mx<T> q, k, v, p, c;
};

template <class A, class T>
Mx<T> attn_forward(const A & a, const Mx<T> & x, const Mx<T> & y, AttnCache<T> & cache)
{
  const T inv = T(1) / std::sqrt(static_cast<T>(a.wq.cols()));
  cache.q.noalias() = x * a.wq;
  cache.k.noalias() = y * a.wk;
  cache.v.noalias() = y * a.wv;
  cache.p.noalias() = (cache.q * cache.k.transpose()) * inv;
  softmax_rows(cache.p);
  cache.c.noalias() = cache.p * cache.v;
  return cache.c * a.wo;
}

/// Accumulates parameter gradients into `g`; returns dX and adds dY into `dy`.
Matrix attn_backward(
  const AttentionParams & a, const Matrix & x, const Matrix & y, const AttnCache<double> & cache,
  const Matrix & d_out, AttentionParams & g, Matrix & dy)
{
  const double inv = 1.0 / std::sqrt(static_cast<double>(a.wq.cols()));
  g.wo.noalias() += cache.c.transpose() * d_out;
  const Matrix dc = d_out * a.wo.transpose();
  const Matrix dp = dc * cache.v.transpose();
  const Matrix dv = cache.p.transpose() * dc;
  Matrix ds = dp;
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    const double dot = dp.row(r).dot(cache.p.row(r));
    ds.row(r) = cache.p.row(r).array() * (dp.row(r).array() - dot);
  }
  ds *= inv;
  const Matrix dq = ds * cache.k;
  const Matrix dk = ds.transpose() * cache.q;
  g.wq.noalias() += x.transpose() * dq;
  g.wk.noalias() += y.transpose() * dk;
  g.wv.noalias() += y.transpose() * dv;
  dy.noalias() += dk * a.wk.transpose();
  dy.noalias() += dv * a.wv.transpose();
  return dq * a.wq.transpose();
}

template <class T>
struct FFCache
{
  Mx<T> h;
};

template <class F, class T>
Mx<T> ff_forward(const F & f, const Mx<T> & x, FFCache<T> & cache)
{
  cache.h = relu<T>(add_row<T>(x * f.w1, f.b1));
  return add_row<T>(cache.h * f.w2, f.b2);
}

Matrix ff_backward(
  const FeedForwardParams & f, const Matrix & x, const FFCache<double> & cache, const Matrix & d_out,
  FeedForwardParams & g)
{
  g.w2.noalias() += cache.h.transpose() * d_out;
  g.b2 += d_out.colwise().sum();
  Matrix dh = d_out * f.w2.transpose();
  dh = dh.cwiseProduct((cache.h.array() > 0.0).cast<double>().matrix());
  g.w1.noalias() += x.transpose() * dh;
  g.b1 += dh.colwise().sum();
  return dh * f.w1.transpose();
}

/// Scenario-independent part: vocabulary MLP and self-attention encoder.
template <class T>
struct EncoderPass
{
  Mx<T> h1, e0;
  std::vector<Mx<T>> x_attn, x_ff;  // layer inputs
  std::vector<AttnCache<T>> attn;
  std::vector<FFCache<T>> ff;
  Mx<T> out;
};

template <class P, class T>
EncoderPass<T> encoder_forward(const P & p, const Mx<T> & vin)
{
  EncoderPass<T> e;
  e.h1 = relu<T>(add_row<T>(vin * p.vocab_w1, p.vocab_b1));
  e.e0 = add_row<T>(e.h1 * p.vocab_w2, p.vocab_b2);
  Mx<T> x = e.e0;
  e.attn.resize(p.enc_attn.size());
  e.ff.resize(p.enc_ff.size());
  for (std::size_t l = 0; l < p.enc_attn.size(); ++l) {
    e.x_attn.push_back(x);
    x += attn_forward(p.enc_attn[l], x, x, e.attn[l]);
    e.x_ff.push_back(x);
    x += ff_forward(p.enc_ff[l], x, e.ff[l]);
  }
  e.out = std::move(x);
  return e;
}

void encoder_backward(
  const StudentParams & p, const Matrix & vin, const EncoderPass<double> & e, Matrix d, StudentParams & g)
{
  for (std::size_t l = p.enc_attn.size(); l-- > 0;) {
    d += ff_backward(p.enc_ff[l], e.x_ff[l], e.ff[l], d, g.enc_ff[l]);
    Matrix dy = Matrix::Zero(d.rows(), d.cols());
    const Matrix dx = attn_backward(p.enc_attn[l], e.x_attn[l], e.x_attn[l], e.attn[l], d, g.enc_attn[l], dy);
    d += dx + dy;
  }
  g.vocab_w2.noalias() += e.h1.transpose() * d;
  g.vocab_b2 += d.colwise().sum();
  Matrix dh = d * p.vocab_w2.transpose();
  dh = dh.cwiseProduct((e.h1.array() > 0.0).cast<double>().matrix());
  g.vocab_w1.noalias() += vin.transpose() * dh;
  g.vocab_b1 += dh.colwise().sum();
}

template <class T>
Mx<T> ego_row(const EgoFeatures & ego)
{
  Mx<T> g(1, 4);
  g << T(ego[0]), T(ego[1]), T(ego[2]), T(ego[3]);
  return g;
}

void check_tokens(const SceneTokens & tokens)
{
  if (tokens.tokens.cols() != static_cast<Eigen::Index>(kTokenDim) || tokens.size() < 1 ||
      static_cast<std::size_t>(tokens.tokens.rows()) != tokens.size() || tokens.n_current > tokens.size()) {
    throw Error(ErrorKind::ShapeMismatch, "scene tokens must be n x 16 with n >= 1", "tokens");
  }
}

template <class T>
struct DecoderPass
{
  Mx<T> ego_in;
  Mx<T> scene;  // projected tokens
  std::vector<Mx<T>> x_attn, x_ff;
  std::vector<AttnCache<T>> attn;
  std::vector<FFCache<T>> ff;
  Mx<T> out;
  Mx<T> logits;  // k x 9
};

/// With `frozen`, rows from `n_current` on are projected with its (constant) scene weights.
template <class P, class T>
DecoderPass<T> decoder_forward(
  const P & p, const Mx<T> & enc_out, const EgoFeatures & ego, const Mx<T> & tokens, std::size_t n_current = 0,
  const P * frozen = nullptr)
{
  DecoderPass<T> d;
  d.ego_in = ego_row<T>(ego);
  Mx<T> x = add_row<T>(enc_out, d.ego_in * p.ego_w + p.ego_b);
  d.scene = add_row<T>(tokens * p.scene_w, p.scene_b);
  const auto n_prev = tokens.rows() - static_cast<Eigen::Index>(n_current);
  if (frozen != nullptr && n_prev > 0) {
    const Mx<T> prev = tokens.bottomRows(n_prev);
    d.scene.bottomRows(n_prev) = add_row<T>(prev * frozen->scene_w, frozen->scene_b);
  }
  d.attn.resize(p.dec_attn.size());
  d.ff.resize(p.dec_ff.size());
  for (std::size_t l = 0; l < p.dec_attn.size(); ++l) {
    d.x_attn.push_back(x);
    x += attn_forward(p.dec_attn[l], x, d.scene, d.attn[l]);
    d.x_ff.push_back(x);
    x += ff_forward(p.dec_ff[l], x, d.ff[l]);
  }
  d.out = std::move(x);
  d.logits = add_row<T>(d.out * p.head_w, p.head_b);
  return d;
}

/// Returns the gradient with respect to the encoder output.
Matrix decoder_backward(
  const StudentParams & p, const SceneTokens & tokens, const DecoderPass<double> & d, const Matrix & d_logits,
  StudentParams & g)
{
  g.head_w.noalias() += d.out.transpose() * d_logits;
  g.head_b += d_logits.colwise().sum();
  Matrix dx = d_logits * p.head_w.transpose();
  Matrix d_scene = Matrix::Zero(d.scene.rows(), d.scene.cols());
  for (std::size_t l = p.dec_attn.size(); l-- > 0;) {
    dx += ff_backward(p.dec_ff[l], d.x_ff[l], d.ff[l], dx, g.dec_ff[l]);
    dx += attn_backward(p.dec_attn[l], d.x_attn[l], d.scene, d.attn[l], dx, g.dec_attn[l], d_scene);
  }
  // Preceding-frame tokens are treated as constants.
  const auto n_cur = static_cast<Eigen::Index>(tokens.n_current);
  const auto cur_tokens = tokens.tokens.topRows(n_cur);
  const auto cur_grad = d_scene.topRows(n_cur);
  g.scene_w.noalias() += cur_tokens.transpose() * cur_grad;
  g.scene_b += cur_grad.colwise().sum();
  const Matrix d_ego = dx.colwise().sum();
  g.ego_w.noalias() += d.ego_in.transpose() * d_ego;
  g.ego_b += d_ego;
  return dx;
}

template <class T>
T sigmoid(T z)
{
  return z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

ForwardOutput make_output(const Matrix & logits)
{
  ForwardOutput out;
  out.im_logits = logits.col(0);
  out.metric_logits = logits.rightCols(kHeads - 1);
  out.metric_scores = out.metric_logits.unaryExpr([](double z) { return sigmoid(z); });
  return out;
}

}  // namespace

Eigen::VectorXd ForwardOutput::im_probs() const
{
  Matrix row = im_logits.transpose();
  softmax_rows(row);
  return row.transpose();
}

Matrix vocab_inputs(const Vocabulary & vocab, const StudentConfig & cfg)
{
  Matrix in(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(kFlatDim));
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const FlatTrajectory & f = vocab.flat()[i];
    for (std::size_t c = 0; c < kFlatDim; ++c) {
      in(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = f[c] / cfg.input_scale[c % 3];
    }
  }
  return in;
}

ForwardOutput forward(
  const StudentModel & model, const Matrix & vocab_in, const EgoFeatures & ego, const SceneTokens & tokens)
{
  if (vocab_in.cols() != static_cast<Eigen::Index>(kFlatDim) || vocab_in.rows() < 1) {
    throw Error(ErrorKind::ShapeMismatch, "vocabulary input must be k x 120", "vocab");
  }
  check_tokens(tokens);
  const auto enc = encoder_forward(model.params(), vocab_in);
  return make_output(decoder_forward(model.params(), enc.out, ego, tokens.tokens).logits);
}

ForwardOutput forward(
  const StudentModel & model, const Vocabulary & vocab, const EgoState & ego, const SceneTokens & tokens)
{
  return forward(model, vocab_inputs(vocab, model.config()), ego_features(ego), tokens);
}

// ---- losses ----------------------------------------------------------------

namespace
{

template <class T>
struct ImitationTerm
{
  T loss = 0;
  Vx<T> grad;
};

template <class T>
ImitationTerm<T> imitation_term(const Vx<T> & logits, const std::vector<double> & y, double eps)
{
  if (static_cast<std::size_t>(logits.size()) != y.size()) {
    throw Error(ErrorKind::ShapeMismatch, "imitation target size differs from the logit count", "target");
  }
  const T mx = logits.maxCoeff();
  Vx<T> p = (logits.array() - mx).exp();
  p /= p.sum();
  ImitationTerm<T> t;
  t.grad = Vx<T>::Zero(logits.size());
  const T log_eps = std::log(T(eps));
  T live = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const T yi = y[static_cast<std::size_t>(i)];
    if (p(i) >= T(eps)) {
      t.loss -= yi * std::log(p(i));
      live += yi;
      t.grad(i) -= yi;
    } else {
      t.loss -= yi * log_eps;
    }
  }
  t.grad += live * p;
  return t;
}

template <class T>
struct DistillTerm
{
  T loss = 0;
  Mx<T> grad;  // d loss / d logit
};

template <class T>
DistillTerm<T> distill_term(
  const Mx<T> & logits, std::span<const double> s, double eps, const std::array<bool, kNumDistillMetrics> & enabled)
{
  const Eigen::Index k = logits.rows();
  if (logits.cols() != static_cast<Eigen::Index>(kNumDistillMetrics) ||
      s.size() != static_cast<std::size_t>(k) * kNumDistillMetrics) {
    throw Error(ErrorKind::ShapeMismatch, "score targets must be k x 8", "scores");
  }
  DistillTerm<T> t;
  t.grad = Mx<T>::Zero(k, logits.cols());
  const T log_eps = std::log(T(eps));
  const T inv_k = T(1) / static_cast<T>(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (std::size_t m = 0; m < kNumDistillMetrics; ++m) {
      if (!enabled[m]) continue;
      const T z = logits(i, static_cast<Eigen::Index>(m));
      const T target = s[static_cast<std::size_t>(i) * kNumDistillMetrics + m];
      const T p = sigmoid(z);
      const T q = sigmoid(-z);
      // log p = -softplus(-z), log(1 - p) = -softplus(z), each clamped at log eps.
      const T soft = std::log1p(std::exp(-std::abs(z)));
      const T log_p = p >= T(eps) ? -(std::max(-z, T(0)) + soft) : log_eps;
      const T log_q = q >= T(eps) ? -(std::max(z, T(0)) + soft) : log_eps;
      t.loss -= inv_k * (target * log_p + (T(1) - target) * log_q);
      T g = 0;
      if (p >= T(eps)) g -= target * q;
      if (q >= T(eps)) g += (T(1) - target) * p;
      t.grad(i, static_cast<Eigen::Index>(m)) = inv_k * g;
    }
  }
  return t;
}

template <class T>
void append_active(const Mx<T> & h, std::vector<bool> & pattern)
{
  for (Eigen::Index i = 0; i < h.size(); ++i) pattern.push_back(h.data()[i] > T(0));
}

/// Mean batch loss in precision T, no gradients. `frozen` holds the constant
/// parameters used for preceding-frame tokens. `pattern`, when set, receives
/// the on/off state of every ReLU unit.
template <class T>
T batch_loss(
  const WideParams<T> & p, const Mx<T> & vin, std::span<const TrainSample * const> batch, double eps,
  const std::array<bool, kNumDistillMetrics> & enabled, const WideParams<T> & frozen,
  std::vector<bool> * pattern = nullptr)
{
  const auto enc = encoder_forward(p, vin);
  if (pattern) {
    pattern->clear();
    append_active(enc.h1, *pattern);
    for (const auto & f : enc.ff) append_active(f.h, *pattern);
  }
  T total = 0;
  for (const TrainSample * s : batch) {
    const Mx<T> tokens = s->tokens.tokens.cast<T>();
    const auto dec = decoder_forward(p, enc.out, s->ego, tokens, s->tokens.n_current, &frozen);
    if (pattern) {
      for (const auto & f : dec.ff) append_active(f.h, *pattern);
    }
    total += imitation_term<T>(dec.logits.col(0), s->target.y, eps).loss;
    total += distill_term<T>(dec.logits.rightCols(kHeads - 1), s->scores, eps, enabled).loss;
  }
  return total / static_cast<T>(batch.size());
}

}  // namespace

double loss_imitation(const Eigen::VectorXd & im_logits, const ImitationTarget & target, double eps)
{
  return imitation_term<double>(im_logits, target.y, eps).loss;
}

double loss_distill(
  const Matrix & metric_scores, std::span<const double> targets, double eps,
  const std::array<bool, kNumDistillMetrics> & enabled)
{
  const Eigen::Index k = metric_scores.rows();
  if (metric_scores.cols() != static_cast<Eigen::Index>(kNumDistillMetrics) ||
      targets.size() != static_cast<std::size_t>(k) * kNumDistillMetrics) {
    throw Error(ErrorKind::ShapeMismatch, "score targets must be k x 8", "scores");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (std::size_t m = 0; m < kNumDistillMetrics; ++m) {
      if (!enabled[m]) continue;
      const double p = metric_scores(i, static_cast<Eigen::Index>(m));
      const double s = targets[static_cast<std::size_t>(i) * kNumDistillMetrics + m];
      loss -= s * std::log(std::max(p, eps)) + (1.0 - s) * std::log(std::max(1.0 - p, eps));
    }
  }
  return loss / static_cast<double>(k);
}

TrainSample make_sample(
  const FramePair & pair, const Vocabulary & vocab, const ScoreMatrix & scores, const StudentConfig & cfg)
{
  if (scores.rows != vocab.size()) {
    throw Error(ErrorKind::ShapeMismatch, "score matrix rows differ from the vocabulary size", scores.scenario_id);
  }
  if (scores.scenario_id != pair.curr.id) {
    throw Error(ErrorKind::InvalidArgument, "score matrix belongs to another scenario", scores.scenario_id);
  }
  TrainSample s;
  s.id = pair.curr.id;
  s.tokens = cfg.temporal_tokens ? encode_scene(pair.curr, pair.prev, pair.prev_to_curr, cfg.encoder)
                                 : encode_scene(pair.curr, cfg.encoder);
  s.ego = ego_features(pair.curr.ego);
  s.target = imitation_targets(pair.curr.human, vocab);
  s.scores = scores.values;
  return s;
}

LossValue loss_and_grad(
  const StudentModel & model, const Matrix & vocab_in, std::span<const TrainSample * const> batch, double eps,
  StudentParams * grad, int jobs)
{
  if (batch.empty()) {
    throw Error(ErrorKind::InvalidArgument, "empty batch");
  }
  const StudentParams & p = model.params();
  const auto & enabled = model.config().metric_enabled;
  for (const TrainSample * s : batch) check_tokens(s->tokens);
  const auto enc = encoder_forward(p, vocab_in);

  struct Slot
  {
    LossValue loss;
    StudentParams grad;
    Matrix d_enc;
  };
  std::vector<Slot> slots(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t b) {
    const TrainSample & s = *batch[b];
    const auto dec = decoder_forward(p, enc.out, s.ego, s.tokens.tokens);
    const auto im = imitation_term<double>(dec.logits.col(0), s.target.y, eps);
    const auto kd = distill_term<double>(dec.logits.rightCols(kHeads - 1), s.scores, eps, enabled);
    slots[b].loss = {im.loss, kd.loss};
    if (grad != nullptr) {
      Matrix d_logits(dec.logits.rows(), kHeads);
      d_logits.col(0) = im.grad;
      d_logits.rightCols(kHeads - 1) = kd.grad;
      slots[b].grad = p.zeros_like();
      slots[b].d_enc = decoder_backward(p, s.tokens, dec, d_logits, slots[b].grad);
    }
  });

  LossValue total;
  for (const auto & s : slots) {
    total.im += s.loss.im;
    total.kd += s.loss.kd;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.im *= inv;
  total.kd *= inv;
  if (grad != nullptr) {
    *grad = p.zeros_like();
    Matrix d_enc = Matrix::Zero(enc.out.rows(), enc.out.cols());
    for (auto & s : slots) {
      grad->add(s.grad);
      d_enc += s.d_enc;
    }
    encoder_backward(p, vocab_in, enc, d_enc, *grad);
    grad->scale(inv);
  }
  return total;
}

// ---- training --------------------------------------------------------------

void train(StudentModel & model, const Vocabulary & vocab, std::span<const TrainSample> data, const TrainOptions & opt)
{
  if (data.empty()) {
    throw Error(ErrorKind::InvalidArgument, "training set is empty");
  }
  if (opt.batch < 1 || !(opt.lr > 0.0) || opt.weight_decay < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "batch must be >= 1, lr > 0 and weight_decay >= 0");
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;

  const Matrix vin = vocab_inputs(vocab, model.config());
  StudentParams m = model.params().zeros_like();
  StudentParams v = m;
  StudentParams g = m;
  std::size_t step = 0;
  std::vector<std::size_t> order(data.size());

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(opt.seed, epoch));
    rng.shuffle(order.begin(), order.end());
    double sum_im = 0.0;
    double sum_kd = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += opt.batch, ++b) {
      const std::size_t end = std::min(order.size(), start + opt.batch);
      std::vector<const TrainSample *> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      const LossValue loss = loss_and_grad(model, vin, batch, opt.eps, &g, opt.jobs);
      bool finite = std::isfinite(loss.total());
      g.visit([&](const std::string &, const Matrix & gm) { finite = finite && gm.allFinite(); });
      if (!finite) {
        throw Error(
          ErrorKind::NonFiniteLoss, "non-finite loss or gradient",
          "epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      }
      sum_im += loss.im * static_cast<double>(batch.size());
      sum_kd += loss.kd * static_cast<double>(batch.size());

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      std::vector<Matrix *> gs, ms, vs;
      g.visit([&](const std::string &, Matrix & x) { gs.push_back(&x); });
      m.visit([&](const std::string &, Matrix & x) { ms.push_back(&x); });
      v.visit([&](const std::string &, Matrix & x) { vs.push_back(&x); });
      std::size_t idx = 0;
      model.params().visit([&](const std::string &, Matrix & w) {
        Matrix & gm = *gs[idx];
        Matrix & mm = *ms[idx];
        Matrix & vm = *vs[idx];
        ++idx;
        mm = beta1 * mm + (1.0 - beta1) * gm;
        vm = beta2 * vm + (1.0 - beta2) * gm.cwiseProduct(gm);
        const Matrix update =
          (mm.array() / c1) / ((vm.array() / c2).sqrt() + adam_eps);
        w -= opt.lr * (update + opt.weight_decay * w);
      });
    }
    TrainingEpoch rec{epoch, sum_im / static_cast<double>(data.size()), sum_kd / static_cast<double>(data.size())};
    model.training_log().push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);
  }
}

// ---- gradient check --------------------------------------------------------

GradCheckReport grad_check(
  const StudentModel & model, const Matrix & vocab_in, std::span<const TrainSample> batch,
  const GradCheckOptions & opt)
{
  std::vector<const TrainSample *> ptrs;
  for (const auto & s : batch) ptrs.push_back(&s);
  StudentParams analytic;
  loss_and_grad(model, vocab_in, ptrs, 1e-6, &analytic);

  StudentModel probe = model;
  std::vector<const Matrix *> grads;
  analytic.visit([&](const std::string &, const Matrix & m) { grads.push_back(&m); });

  auto selected = [&](const std::string & name) {
    if (opt.only.empty()) return true;
    return std::any_of(opt.only.begin(), opt.only.end(), [&](const std::string & p) { return name.rfind(p, 0) == 0; });
  };

  using Wide = long double;
  const Mx<Wide> vin = vocab_in.cast<Wide>();
  const auto & enabled = model.config().metric_enabled;
  const WideParams<Wide> frozen = widen<Wide>(model.params());
  auto loss_at = [&](const StudentParams & p, std::vector<bool> * pattern) {
    return batch_loss(widen<Wide>(p), vin, ptrs, 1e-6, enabled, frozen, pattern);
  };
  std::vector<bool> base, up_pattern, down_pattern;
  loss_at(model.params(), &base);

  GradCheckReport report;
  Rng rng(opt.seed);
  std::size_t block = 0;
  probe.params().visit([&](const std::string & name, Matrix & w) {
    const Matrix & ga = *grads[block++];
    if (!selected(name)) return;
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(w.size()));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (opt.max_entries > 0 && entries.size() > opt.max_entries) {
      rng.shuffle(entries.begin(), entries.end());
      entries.resize(opt.max_entries);
      std::sort(entries.begin(), entries.end());
    }
    GradCheckBlock rec{name, entries.size(), 0.0};
    for (Eigen::Index e : entries) {
      double & theta = w.data()[e];
      const double saved = theta;
      double step = opt.epsilon;
      bool smooth = false;
      Wide up = 0, down = 0;
      double up_step = 0, down_step = 0;
      for (int attempt = 0; attempt <= opt.kink_retries && !smooth; ++attempt, step *= 0.1) {
        theta = saved + step;
        up_step = theta - saved;
        up = loss_at(probe.params(), &up_pattern);
        theta = saved - step;
        down_step = saved - theta;
        down = loss_at(probe.params(), &down_pattern);
        theta = saved;
        smooth = up_pattern == base && down_pattern == base;
      }
      if (!smooth) {
        ++rec.skipped_at_kinks;
        continue;
      }
      const auto numeric = static_cast<double>((up - down) / (static_cast<Wide>(up_step) + down_step));
      const double a = ga.data()[e];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      rec.max_rel_error = std::max(rec.max_rel_error, rel);
    }
    report.max_rel_error = std::max(report.max_rel_error, rec.max_rel_error);
    report.skipped_at_kinks += rec.skipped_at_kinks;
    report.blocks.push_back(rec);
  });
  return report;
}

// ---- serialization ---------------------------------------------------------

namespace
{

json matrix_json(const Matrix & m)
{
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::uint64_t StudentModel::hash() const
{
  json j = json::object();
  params_.visit([&](const std::string & name, const Matrix & m) { j[name] = matrix_json(m); });
  return fnv1a64(j.dump());
}

json model_to_json(const StudentModel & model)
{
  json params = json::object();
  model.params().visit([&](const std::string & name, const Matrix & m) { params[name] = matrix_json(m); });
  json log = json::array();
  for (const auto & e : model.training_log()) {
    log.push_back({{"epoch", e.epoch}, {"loss_im", e.loss_im}, {"loss_kd", e.loss_kd}});
  }
  return {
    {"config", model.config().to_json()},
    {"seed", model.seed()},
    {"parameter_count", model.params().count()},
    {"parameters", params},
    {"training_log", log},
  };
}

StudentModel model_from_json(const json & j)
{
  if (!j.is_object() || !j.contains("config") || !j.contains("parameters")) {
    throw Error(ErrorKind::Schema, "model file needs 'config' and 'parameters'", "model");
  }
  StudentModel model(StudentConfig::from_json(j["config"]), j.value("seed", std::uint64_t{0}));
  const json & params = j["parameters"];
  model.params().visit([&](const std::string & name, Matrix & m) {
    if (!params.contains(name)) {
      throw Error(ErrorKind::Schema, "missing parameter block '" + name + "'", "parameters." + name);
    }
    const json & rows = params[name];
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != m.rows()) {
      throw Error(ErrorKind::Schema, "parameter block '" + name + "' has the wrong shape", "parameters." + name);
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const json & row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols()) {
        throw Error(ErrorKind::Schema, "parameter block '" + name + "' has the wrong shape", "parameters." + name);
      }
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  });
  if (j.contains("training_log")) {
    for (const auto & e : j["training_log"]) {
      model.training_log().push_back(
        {e.at("epoch").get<std::size_t>(), e.at("loss_im").get<double>(), e.at("loss_kd").get<double>()});
    }
  }
  return model;
}

}  // namespace hmdp
