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

#include "CLI11.hpp"
#include "hmdp/pipeline.hpp"

#include <iostream>

namespace pl = hmdp::pipeline;

namespace
{

std::array<std::size_t, 3> parse_split(const std::string & text)
{
  const auto parts = pl::split_list(text);
  if (parts.size() != 3) {
    throw hmdp::Error(hmdp::ErrorKind::InvalidArgument, "--split needs three comma-separated sizes", "split");
  }
  std::array<std::size_t, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = std::stoul(parts[i]);
  return out;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Trajectory scoring, distillation and selection toolkit"};
  app.require_subcommand(1);

  pl::GenArgs gen;
  std::string split;
  auto * g = app.add_subcommand("gen", "Generate scenario pairs");
  g->add_option("--count", gen.count)->required();
  g->add_option("--seed", gen.seed)->required();
  g->add_option("--out", gen.out)->required();
  g->add_option("--mix", gen.mix, "uniform, a template name or four weights")->capture_default_str();
  g->add_option("--split", split, "train,val,test sizes");
  g->add_option("--jobs", gen.jobs)->capture_default_str();

  pl::VocabArgs voc;
  auto * v = app.add_subcommand("vocab", "Cluster sampled plans into a vocabulary");
  v->add_option("--samples", voc.samples)->capture_default_str();
  v->add_option("--k", voc.k)->capture_default_str();
  v->add_option("--iters", voc.iters)->capture_default_str();
  v->add_option("--seed", voc.seed)->required();
  v->add_option("--out", voc.out)->required();
  v->add_option("--jobs", voc.jobs)->capture_default_str();

  pl::TeachArgs teach;
  std::string teach_config;
  auto * t = app.add_subcommand("teach", "Score every vocabulary entry in every scenario");
  t->add_option("--scenarios", teach.scenarios)->required();
  t->add_option("--vocab", teach.vocab)->required();
  t->add_option("--config", teach_config);
  t->add_option("--out", teach.out)->required();
  t->add_option("--jobs", teach.jobs)->capture_default_str();

  pl::TrainArgs tr;
  std::string ablate;
  auto * r = app.add_subcommand("train", "Train the student model");
  r->add_option("--scenarios", tr.scenarios)->required();
  r->add_option("--scores", tr.scores)->required();
  r->add_option("--vocab", tr.vocab)->required();
  r->add_option("--epochs", tr.epochs)->capture_default_str();
  r->add_option("--lr", tr.lr)->capture_default_str();
  r->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  r->add_option("--batch", tr.batch)->capture_default_str();
  r->add_option("--seed", tr.seed)->required();
  r->add_option("--d-model", tr.d_model)->capture_default_str();
  r->add_option("--ablate", ablate, "metric heads to drop, e.g. TL,DDC,LK");
  r->add_option("--out", tr.out)->required();
  r->add_option("--jobs", tr.jobs)->capture_default_str();
  r->add_flag("--verbose", tr.verbose);

  pl::CalibrateArgs cal;
  std::string grid;
  auto * c = app.add_subcommand("calibrate", "Grid-search the inference weights");
  c->add_option("--model", cal.model)->required();
  c->add_option("--scenarios", cal.scenarios)->required();
  c->add_option("--grid", grid, "JSON object of per-weight value lists");
  c->add_option("--out", cal.out)->required();
  c->add_option("--jobs", cal.jobs)->capture_default_str();

  pl::BenchmarkArgs bench;
  std::string compare;
  auto * b = app.add_subcommand("benchmark", "Select and score trajectories on a scenario set");
  b->add_option("--model", bench.model)->required();
  b->add_option("--weights", bench.weights)->required();
  b->add_option("--scenarios", bench.scenarios)->required();
  b->add_option("--out", bench.out)->required();
  b->add_option("--jobs", bench.jobs)->capture_default_str();
  b->add_option("--compare", compare, "imitation-only and/or uniform");

  pl::EvalArgs ev;
  std::string eval_config;
  auto * e = app.add_subcommand("eval", "Score one trajectory against one scenario");
  e->add_option("--scenario", ev.scenario)->required();
  e->add_option("--trajectory", ev.trajectory)->required();
  e->add_option("--vocab", ev.vocab)->required();
  e->add_option("--config", eval_config);

  pl::RenderArgs ren;
  auto * n = app.add_subcommand("render", "Draw a scenario with candidates colored by a metric");
  n->add_option("--scenario", ren.scenario)->required();
  n->add_option("--vocab", ren.vocab)->required();
  n->add_option("--scores", ren.scores)->required();
  n->add_option("--metric", ren.metric)->capture_default_str();
  n->add_option("--out", ren.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) {
      if (!split.empty()) gen.split = parse_split(split);
      pl::gen(gen);
    } else if (v->parsed()) {
      pl::vocab(voc);
    } else if (t->parsed()) {
      if (!teach_config.empty()) teach.config = teach_config;
      pl::teach(teach);
    } else if (r->parsed()) {
      tr.ablate = pl::split_list(ablate);
      pl::train(tr);
    } else if (c->parsed()) {
      if (!grid.empty()) cal.grid = grid;
      const hmdp::GridResult res = pl::calibrate(cal);
      std::cout << nlohmann::json{{"weights", res.best.to_json()}, {"mean_epdms", res.best_epdms}}.dump() << '\n';
    } else if (b->parsed()) {
      if (!compare.empty()) bench.compare = compare;
      const nlohmann::json report = pl::benchmark(bench);
      nlohmann::json summary = nlohmann::json::object();
      for (const auto & [name, run] : report["runs"].items()) summary[name] = run["aggregate_percent"];
      std::cout << summary.dump() << '\n';
    } else if (e->parsed()) {
      if (!eval_config.empty()) ev.config = eval_config;
      std::cout << pl::eval(ev).dump(1) << '\n';
    } else if (n->parsed()) {
      pl::render(ren);
    }
  } catch (const hmdp::Error & err) {
    std::cerr << pl::error_json(err).dump() << '\n';
    return pl::exit_code(err.kind());
  } catch (const std::exception & err) {
    std::cerr << nlohmann::json{{"error", "Internal"}, {"message", err.what()}, {"context", ""}}.dump() << '\n';
    return 1;
  }
  return 0;
}
