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

#include "hmdp/pipeline.hpp"

#include "hmdp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace hmdp::pipeline
{

using nlohmann::json;

// ---- plumbing --------------------------------------------------------------

OutputGuard::~OutputGuard()
{
  if (committed_) return;
  std::error_code ec;
  for (auto it = paths_.rbegin(); it != paths_.rend(); ++it) fs::remove_all(*it, ec);
}

void OutputGuard::file(const fs::path & path)
{
  if (!fs::exists(path)) paths_.push_back(path);
}

void OutputGuard::directory(const fs::path & path)
{
  if (!fs::exists(path)) paths_.push_back(path);
  fs::create_directories(path);
}

int exit_code(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::Schema:
    case ErrorKind::InvalidTemplateMix: return 2;
    case ErrorKind::ConfigHashMismatch: return 3;
    case ErrorKind::NonFiniteLoss: return 4;
    default: return 1;
  }
}

json error_json(const Error & e)
{
  return {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}, {"context", e.context()}};
}

std::vector<std::string> split_list(const std::string & text)
{
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

TeacherConfig load_teacher_config(const std::optional<fs::path> & path)
{
  if (!path) return {};
  return TeacherConfig::from_json(read_json(*path));
}

namespace
{

void check_hash(std::uint64_t expected, std::uint64_t actual, const std::string & what, const std::string & context)
{
  if (expected != actual) {
    throw Error(
      ErrorKind::ConfigHashMismatch, what + " hash " + hex64(actual) + " does not match " + hex64(expected), context);
  }
}

std::string csv_number(double v)
{
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

// ---- gen / vocab / teach ---------------------------------------------------

void gen(const GenArgs & a)
{
  if (a.count == 0) throw Error(ErrorKind::InvalidArgument, "--count must be positive", "count");
  const TemplateMix mix = a.mix == "uniform" ? TemplateMix::uniform() : TemplateMix::parse(a.mix);
  if (a.split && (*a.split)[0] + (*a.split)[1] + (*a.split)[2] != a.count) {
    throw Error(ErrorKind::InvalidArgument, "split sizes must add up to --count", "split");
  }
  GenerateOptions opts;
  opts.jobs = a.jobs;
  const std::vector<FramePair> pairs = generate_scenarios(a.count, a.seed, mix, opts);

  OutputGuard guard;
  guard.directory(a.out);
  guard.directory(a.out / "scenarios");
  const std::vector<PairRecord> records = save_pairs(pairs, a.out);
  guard.file(a.out / "manifest.json");
  save_manifest(records, a.out / "manifest.json");
  if (a.split) {
    const char * names[3] = {"train.json", "val.json", "test.json"};
    std::size_t start = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t n = (*a.split)[s];
      guard.file(a.out / names[s]);
      save_manifest({records.begin() + static_cast<std::ptrdiff_t>(start), records.begin() + static_cast<std::ptrdiff_t>(start + n)}, a.out / names[s]);
      start += n;
    }
  }
  guard.commit();
}

void vocab(const VocabArgs & a)
{
  KMeansOptions opt;
  opt.k = a.k;
  opt.iterations = a.iters;
  opt.seed = a.seed;
  opt.jobs = a.jobs;
  const Vocabulary v = kmeans(sample_trajectories(a.samples, a.seed), opt);
  OutputGuard guard;
  guard.file(a.out);
  save_vocabulary(v, a.out);
  guard.commit();
}

void teach(const TeachArgs & a)
{
  const std::vector<FramePair> pairs = load_pairs(a.scenarios);
  const Vocabulary v = load_vocabulary(a.vocab);
  const TeacherConfig cfg = load_teacher_config(a.config);
  cfg.validate();

  std::vector<ScoreMatrix> scores(pairs.size());
  parallel_for(pairs.size(), a.jobs, [&](std::size_t i) { scores[i] = teach_scenario(pairs[i].curr, v, cfg); });

  OutputGuard guard;
  guard.directory(a.out);
  guard.file(a.out / "teacher_config.json");
  write_file_atomic(a.out / "teacher_config.json", cfg.to_json().dump(1) + "\n");
  for (const auto & sm : scores) {
    const fs::path p = a.out / (sm.scenario_id + ".bin");
    guard.file(p);
    guard.file(fs::path(p).replace_extension(".json"));
    save_score_matrix(sm, p);
  }
  guard.commit();
}

// ---- train -----------------------------------------------------------------

void train(const TrainArgs & a)
{
  const std::vector<FramePair> pairs = load_pairs(a.scenarios);
  if (pairs.empty()) throw Error(ErrorKind::InsufficientData, "no training pairs", a.scenarios.string());
  const Vocabulary v = load_vocabulary(a.vocab);
  const TeacherConfig teacher = TeacherConfig::from_json(read_json(a.scores / "teacher_config.json"));

  StudentConfig cfg;
  cfg.d_model = a.d_model;
  for (const auto & name : a.ablate) {
    const auto m = metric_from_name(name);
    if (!m) throw Error(ErrorKind::InvalidArgument, "unknown metric '" + name + "'", "ablate");
    cfg.metric_enabled[idx(*m)] = false;
  }
  cfg.validate();

  std::vector<TrainSample> samples(pairs.size());
  parallel_for(pairs.size(), a.jobs, [&](std::size_t i) {
    const fs::path p = a.scores / (pairs[i].curr.id + ".bin");
    const ScoreMatrix sm = load_score_matrix(p);
    check_hash(v.hash(), sm.vocab_hash, "score matrix vocabulary", p.string());
    check_hash(teacher.hash(), sm.config_hash, "score matrix teacher config", p.string());
    samples[i] = make_sample(pairs[i], v, sm, cfg);
  });

  StudentModel model(cfg, a.seed);
  TrainOptions opt;
  opt.lr = a.lr;
  opt.weight_decay = a.weight_decay;
  opt.epochs = a.epochs;
  opt.batch = a.batch;
  opt.seed = a.seed;
  opt.eps = teacher.log_clamp_eps;
  opt.jobs = a.jobs;
  if (a.verbose) {
    opt.on_epoch = [](const TrainingEpoch & e) {
      std::fprintf(stderr, "epoch %zu  loss_im %.6f  loss_kd %.6f\n", e.epoch, e.loss_im, e.loss_kd);
    };
  }
  hmdp::train(model, v, samples, opt);

  json j = model_to_json(model);
  j["training"] = {
    {"lr", a.lr},      {"weight_decay", a.weight_decay}, {"epochs", a.epochs},
    {"batch", a.batch}, {"seed", a.seed},                {"ablate", a.ablate},
    {"samples", samples.size()},
  };
  j["model_hash"] = hex64(model.hash());
  j["vocab_hash"] = hex64(v.hash());
  j["teacher_config_hash"] = hex64(teacher.hash());
  j["teacher_config"] = teacher.to_json();
  j["vocab"] = vocabulary_to_json(v);

  OutputGuard guard;
  guard.file(a.out);
  write_file_atomic(a.out, j.dump() + "\n");
  guard.commit();
}

ModelBundle load_model(const fs::path & path)
{
  const json j = read_json(path);
  if (!j.contains("vocab") || !j.contains("teacher_config")) {
    throw Error(ErrorKind::Schema, "model file needs embedded 'vocab' and 'teacher_config'", path.string());
  }
  ModelBundle b{model_from_json(j), vocabulary_from_json(j["vocab"]), TeacherConfig::from_json(j["teacher_config"]),
                j.value("training", json::object())};
  if (j.contains("vocab_hash")) check_hash(std::stoull(j["vocab_hash"].get<std::string>(), nullptr, 16), b.vocab.hash(), "embedded vocabulary", path.string());
  if (j.contains("model_hash")) check_hash(std::stoull(j["model_hash"].get<std::string>(), nullptr, 16), b.model.hash(), "model parameters", path.string());
  return b;
}

// ---- calibrate / benchmark -------------------------------------------------

GridResult calibrate(const CalibrateArgs & a)
{
  const ModelBundle b = load_model(a.model);
  const std::vector<FramePair> pairs = load_pairs(a.scenarios);
  const GridSpec grid = a.grid ? GridSpec::from_json(read_json(*a.grid)) : GridSpec::default_grid();
  const ScoredPairs scored = score_pairs(b.model, b.vocab, pairs, b.teacher, a.jobs);
  const GridResult r = grid_search(scored, pairs, b.vocab, grid, b.teacher, a.jobs);

  const fs::path table = fs::path(a.out).replace_filename(a.out.stem().string() + "_grid.csv");
  json w = r.best.to_json();
  w["grid_table_path"] = table.filename().generic_string();
  w["mean_epdms"] = r.best_epdms;
  w["grid"] = grid.to_json();
  w["model_hash"] = hex64(b.model.hash());
  w["scenario_count"] = pairs.size();

  OutputGuard guard;
  guard.file(a.out);
  guard.file(table);
  write_file_atomic(table, grid_table_csv(r));
  write_file_atomic(a.out, w.dump(1) + "\n");
  guard.commit();
  return r;
}

json benchmark_run(
  const ScoredPairs & scored, std::span<const FramePair> pairs, const Vocabulary & vocab,
  const InferenceWeights & w, const TeacherConfig & cfg, int jobs)
{
  const std::vector<PairOutcome> outcomes = evaluate_weights(scored, pairs, vocab, w, cfg, jobs);
  json rows = json::array();
  std::array<double, 9> sums{};
  double sum_pdms = 0.0;
  double sum_epdms = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairOutcome & o = outcomes[i];
    // Re-verify that both selections are the first minimizer of their cost vectors.
    for (const auto & [terms, chosen] : {std::pair{&scored.curr_terms[i], o.curr_index}, std::pair{&scored.prev_terms[i], o.prev_index}}) {
      const SelectionResult r = select_from_terms(*terms, w);
      const std::size_t first = argmin_first(r.costs);
      if (first != chosen || r.chosen_index != chosen) {
        throw Error(ErrorKind::InvalidArgument, "selected index is not the cost argmin", pairs[i].curr.id);
      }
    }
    const SubScores & s = o.scores;
    const std::array<double, 9> v{*s.nc, *s.dac, *s.ep, *s.ttc, *s.c, *s.tl, *s.ddc, *s.lk, *s.ec};
    for (std::size_t m = 0; m < v.size(); ++m) sums[m] += v[m];
    const double p = pdms(s);
    const double e = epdms(s);
    sum_pdms += p;
    sum_epdms += e;
    rows.push_back({
      {"scenario_id", pairs[i].curr.id},
      {"selected_index", o.curr_index},
      {"preceding_selected_index", o.prev_index},
      {"subscores", s.to_json()},
      {"pdms", p},
      {"epdms", e},
    });
  }
  const double n = static_cast<double>(pairs.size());
  json agg = json::object();
  const std::array<const char *, 9> names{"NC", "DAC", "EP", "TTC", "C", "TL", "DDC", "LK", "EC"};
  for (std::size_t m = 0; m < names.size(); ++m) agg[names[m]] = 100.0 * sums[m] / n;
  agg["PDMS"] = 100.0 * sum_pdms / n;
  agg["EPDMS"] = 100.0 * sum_epdms / n;
  return {{"weights", w.to_json()}, {"scenarios", rows}, {"aggregate_percent", agg}};
}

json benchmark(const BenchmarkArgs & a)
{
  const ModelBundle b = load_model(a.model);
  const std::vector<FramePair> pairs = load_pairs(a.scenarios);
  if (pairs.empty()) throw Error(ErrorKind::InsufficientData, "no benchmark pairs", a.scenarios.string());
  const json wj = read_json(a.weights);
  const InferenceWeights w = InferenceWeights::from_json(wj);
  if (wj.contains("model_hash")) {
    check_hash(b.model.hash(), std::stoull(wj["model_hash"].get<std::string>(), nullptr, 16), "weights model", a.weights.string());
  }

  const ScoredPairs scored = score_pairs(b.model, b.vocab, pairs, b.teacher, a.jobs);
  json runs = json::object();
  runs["calibrated"] = benchmark_run(scored, pairs, b.vocab, w, b.teacher, a.jobs);
  if (a.compare) {
    for (const auto & name : split_list(*a.compare)) {
      InferenceWeights cw;
      if (name == "imitation-only") {
        cw = InferenceWeights::imitation_only();
      } else if (name == "uniform") {
        cw = InferenceWeights{};
      } else {
        throw Error(ErrorKind::InvalidArgument, "unknown comparison '" + name + "'", "compare");
      }
      runs[name] = benchmark_run(scored, pairs, b.vocab, cw, b.teacher, a.jobs);
    }
  }

  json report = {
    {"scenario_count", pairs.size()},
    {"model_hash", hex64(b.model.hash())},
    {"vocab_hash", hex64(b.vocab.hash())},
    {"teacher_config_hash", hex64(b.teacher.hash())},
    {"model_seed", b.model.seed()},
    {"training", b.training},
    {"weighted_term", {{"EP", 5}, {"TTC", 5}, {"C", 2}, {"LK", 5}, {"excluded", {"EC"}}}},
    {"runs", runs},
  };

  std::ostringstream csv;
  csv << "run,scenario_id,selected_index,preceding_selected_index,NC,DAC,EP,TTC,C,TL,DDC,LK,EC,PDMS,EPDMS\n";
  for (const auto & [name, run] : runs.items()) {
    for (const auto & row : run["scenarios"]) {
      csv << name << ',' << row["scenario_id"].get<std::string>() << ',' << row["selected_index"].get<std::size_t>() << ','
          << row["preceding_selected_index"].get<std::size_t>();
      for (const char * m : {"NC", "DAC", "EP", "TTC", "C", "TL", "DDC", "LK", "EC"}) {
        csv << ',' << csv_number(row["subscores"][m].get<double>());
      }
      csv << ',' << csv_number(row["pdms"].get<double>()) << ',' << csv_number(row["epdms"].get<double>()) << '\n';
    }
    csv << name << ",MEAN_PERCENT,,";
    for (const char * m : {"NC", "DAC", "EP", "TTC", "C", "TL", "DDC", "LK", "EC", "PDMS", "EPDMS"}) {
      csv << ',' << csv_number(run["aggregate_percent"][m].get<double>());
    }
    csv << '\n';
  }

  OutputGuard guard;
  guard.directory(a.out);
  guard.file(a.out / "report.json");
  guard.file(a.out / "report.csv");
  write_file_atomic(a.out / "report.json", report.dump(1) + "\n");
  write_file_atomic(a.out / "report.csv", csv.str());
  guard.commit();
  return report;
}

// ---- eval / render ---------------------------------------------------------

json eval(const EvalArgs & a)
{
  const Scenario scn = load_scenario(a.scenario);
  const Trajectory traj = trajectory_from_json(read_json(a.trajectory));
  const Vocabulary v = load_vocabulary(a.vocab);
  const TeacherConfig cfg = load_teacher_config(a.config);
  const SubScores s = evaluate_trajectory(traj, scn, v, cfg);
  return {{"scenario_id", scn.id}, {"subscores", s.to_json()}, {"pdms", pdms(s)}, {"epdms", epdms(s)}};
}

namespace
{

struct SvgFrame
{
  double x0, y1, scale;
  double px(double x) const { return (x - x0) * scale; }
  double py(double y) const { return (y1 - y) * scale; }
};

std::string color_for(double v)
{
  v = std::clamp(v, 0.0, 1.0);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(220 * (1.0 - v)), static_cast<int>(60 + 140 * v), 60);
  return buf;
}

std::string points(const SvgFrame & f, const std::vector<geom::Vec2> & pts)
{
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  for (const auto & p : pts) os << f.px(p.x) << ',' << f.py(p.y) << ' ';
  return os.str();
}

std::vector<geom::Vec2> trajectory_points(const Trajectory & t, geom::Vec2 start)
{
  std::vector<geom::Vec2> pts{start};
  for (const auto & p : t.poses()) pts.push_back(p.position());
  return pts;
}

}  // namespace

void render(const RenderArgs & a)
{
  const Scenario scn = load_scenario(a.scenario);
  const Vocabulary v = load_vocabulary(a.vocab);
  const ScoreMatrix sm = load_score_matrix(a.scores);
  check_hash(v.hash(), sm.vocab_hash, "score matrix vocabulary", a.scores.string());
  if (sm.scenario_id != scn.id) {
    throw Error(ErrorKind::InvalidArgument, "score matrix belongs to scenario '" + sm.scenario_id + "'", a.scores.string());
  }

  std::string metric = a.metric;
  std::transform(metric.begin(), metric.end(), metric.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  const auto m = metric_from_name(metric);
  if (!m && metric != "PDMS" && metric != "EPDMS") {
    throw Error(ErrorKind::InvalidArgument, "unknown metric '" + a.metric + "'", "metric");
  }
  std::vector<double> value(sm.rows);
  for (std::size_t i = 0; i < sm.rows; ++i) {
    SubScores s = sm.row_scores(i);
    s.ec = 1.0;
    value[i] = m ? sm.at(i, *m) : (metric == "PDMS" ? pdms(s) : epdms(s));
  }

  double x0 = -10.0, x1 = 10.0, y0 = -10.0, y1 = 10.0;
  auto grow = [&](geom::Vec2 p) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  };
  for (const auto & t : v.trajectories()) {
    for (const auto & p : t.poses()) grow(p.position());
  }
  for (const auto & p : scn.human.poses()) grow(p.position());
  x0 -= 5.0;
  x1 += 5.0;
  y0 -= 5.0;
  y1 += 5.0;
  const SvgFrame f{x0, y1, 8.0};
  const double width = (x1 - x0) * f.scale;
  const double height = (y1 - y0) * f.scale;

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + 40
     << "\" viewBox=\"0 0 " << width << ' ' << height + 40 << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#f4f4f0\"/>\n";
  for (const auto & poly : scn.drivable) {
    os << "<polygon points=\"" << points(f, poly.vertices()) << "\" fill=\"#d0d0d0\" stroke=\"#999\" stroke-width=\"1\"/>\n";
  }
  for (const auto & sig : scn.signals) {
    const bool red = sig.state_at(0.0) == SignalState::Red;
    os << "<polygon points=\"" << points(f, sig.region.vertices()) << "\" fill=\"" << (red ? "#f2a0a0" : "#a0e0a0")
       << "\" fill-opacity=\"0.6\"/>\n";
  }
  for (const auto & lane : scn.lanes) {
    os << "<polyline points=\"" << points(f, lane.points()) << "\" fill=\"none\" stroke=\"#ffffff\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
  }
  os << "<polyline points=\"" << points(f, scn.route.points()) << "\" fill=\"none\" stroke=\"#7070ff\" stroke-width=\"1\" stroke-opacity=\"0.6\"/>\n";
  for (const auto & ag : scn.agents) {
    const geom::OrientedBox box = ag.box_at_index(0);
    const auto c = box.corners();
    os << "<polygon points=\"" << points(f, {c.begin(), c.end()}) << "\" fill=\"#555\"/>\n";
  }

  // Draw the worst candidates first so the best stay visible.
  std::vector<std::size_t> order(sm.rows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return value[i] < value[j]; });
  const geom::Vec2 start = scn.ego.pose.position();
  for (std::size_t i : order) {
    os << "<polyline points=\"" << points(f, trajectory_points(v[i], start)) << "\" fill=\"none\" stroke=\""
       << color_for(value[i]) << "\" stroke-width=\"1\" stroke-opacity=\"0.8\"/>\n";
  }
  os << "<polyline points=\"" << points(f, trajectory_points(scn.human, start))
     << "\" fill=\"none\" stroke=\"#1060ff\" stroke-width=\"2.5\"/>\n";
  const geom::OrientedBox ego = scn.ego.box_at(scn.ego.pose);
  const auto ec = ego.corners();
  os << "<polygon points=\"" << points(f, {ec.begin(), ec.end()}) << "\" fill=\"#1060ff\"/>\n";

  // Legend.
  const double ly = height + 10;
  for (int s = 0; s <= 10; ++s) {
    os << "<rect x=\"" << 10 + 20 * s << "\" y=\"" << ly << "\" width=\"20\" height=\"12\" fill=\"" << color_for(s / 10.0) << "\"/>\n";
  }
  os << "<text x=\"240\" y=\"" << ly + 11 << "\" font-family=\"sans-serif\" font-size=\"12\">" << metric
     << " 0 to 1 (scenario " << scn.id << ", k = " << sm.rows << "; blue: human)</text>\n";
  os << "</svg>\n";

  OutputGuard guard;
  guard.file(a.out);
  write_file_atomic(a.out, os.str());
  guard.commit();
}

}  // namespace hmdp::pipeline
