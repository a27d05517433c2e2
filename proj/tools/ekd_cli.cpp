// tools/ekd_cli.cpp

// Copyright 2026  The ekd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: data generation, teacher training, fusion-weight
// search, soft-label dumping, student training, evaluation and the full
// experiment sweep.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ekd/config.hpp"
#include "ekd/io.hpp"
#include "ekd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ekd;

namespace {

constexpr const char *kTrainFile = "train.ekdd";
constexpr const char *kTrainOriginalFile = "train_original.ekdd";
constexpr const char *kHeldoutFile = "heldout.ekdd";
constexpr const char *kTestFile = "test.ekdd";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> k;
  std::optional<double> lambda;
  std::optional<double> temperature;
  std::optional<double> grid_step;
  std::string data;
  std::string models;
  std::vector<std::string> model_files;
  std::string cache;
  std::string weights;
  std::string split = "test";
  std::optional<std::size_t> member;
  bool student_arch = false;
};

std::uint64_t pick_seed(const Options &o, const ExperimentConfig &cfg) { return o.seed ? *o.seed : cfg.seeds.front(); }

ExperimentConfig read_config(const Options &o) {
  auto cfg = load_config(o.config);
  cfg.validate();
  return cfg;
}

Dataset student_train(const Options &o, const ExperimentConfig &cfg) {
  return load_dataset(fs::path(o.data) / (cfg.student_data == StudentData::kAugmented ? kTrainFile : kTrainOriginalFile));
}

Dataset split_file(const Options &o, const std::string &split) {
  const auto s = split_from_string(split);
  const char *name = s == Split::kTrain ? kTrainFile : s == Split::kHeldout ? kHeldoutFile : kTestFile;
  return load_dataset(fs::path(o.data) / name);
}

std::vector<Model> load_teachers(const Options &o, const ExperimentConfig &cfg) {
  std::vector<Model> teachers;
  for (std::size_t i = 0; i < cfg.teachers.size(); ++i) {
    const auto path = fs::path(o.models) / ("teacher_" + std::to_string(i) + ".ekdm");
    if (!fs::exists(path)) throw ConfigError("missing teacher model '" + path.string() + "'");
    teachers.push_back(load_model(path));
  }
  return teachers;
}

Json weights_json(const GridSearchResult &r) {
  return Json{{"weights", r.weights.weights},
              {"heldout_errors", r.errors},
              {"heldout_error_rate", r.error_rate},
              {"candidates", r.candidates.size()}};
}

FusionWeights read_weights(const std::string &path) {
  Json j;
  try {
    j = Json::parse(detail::read_file(path));
    FusionWeights w{j.at("weights").get<std::vector<double>>()};
    w.validate();
    return w;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError("bad weights file '" + path + "': " + e.what());
  }
}

FusionWeights resolve_weights(const Options &o, const ExperimentConfig &cfg) {
  if (!o.weights.empty()) return read_weights(o.weights);
  if (cfg.fusion_weights) return *cfg.fusion_weights;
  throw ConfigError("no fusion weights: pass --weights (see fuse-search) or set \"fusion\" in the config");
}

void write_text(const fs::path &path, const std::string &text) { write_file_atomic(path, text); }

int cmd_gen_data(const Options &o) {
  const auto cfg = read_config(o);
  const auto corpus = synth_generate(synth_for_seed(cfg, pick_seed(o, cfg)));
  const auto train = augment_speed(corpus.train, cfg.speed_factors);
  const fs::path dir(o.out);
  save_dataset(dir / kTrainFile, train);
  save_dataset(dir / kTrainOriginalFile, corpus.train);
  save_dataset(dir / kHeldoutFile, corpus.heldout);
  save_dataset(dir / kTestFile, corpus.test);
  std::printf("train %zu utts %zu frames (x%zu speed factors), heldout %zu frames, test %zu frames\n",
              train.utterances.size(), train.total_frames(), cfg.speed_factors.size(), corpus.heldout.total_frames(),
              corpus.test.total_frames());
  return 0;
}

int cmd_train_teacher(const Options &o) {
  const auto cfg = read_config(o);
  const auto seed = pick_seed(o, cfg);
  const auto fd = cfg.synth.feature_dim, nc = cfg.synth.num_classes;
  const fs::path dir(o.out);
  if (o.student_arch) {
    const auto spec = cfg.student.network(fd, nc);
    const auto r = train_model(spec, student_train(o, cfg), cfg.training, student_seed(seed));
    save_model(dir / "baseline.ekdm", {spec, r.params});
    std::printf("baseline: final epoch loss %.6f\n", r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back());
    return 0;
  }
  const auto train = load_dataset(fs::path(o.data) / kTrainFile);
  for (std::size_t i = 0; i < cfg.teachers.size(); ++i) {
    if (o.member && *o.member != i) continue;
    const auto spec = cfg.teachers[i].network(fd, nc);
    const auto r = train_model(spec, train, cfg.training, teacher_seed(seed, i));
    save_model(dir / ("teacher_" + std::to_string(i) + ".ekdm"), {spec, r.params});
    std::printf("teacher_%zu: final epoch loss %.6f\n", i, r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back());
  }
  if (o.member && *o.member >= cfg.teachers.size()) throw ConfigError("--member out of range");
  return 0;
}

int cmd_fuse_search(const Options &o) {
  const auto cfg = read_config(o);
  const auto teachers = load_teachers(o, cfg);
  const auto heldout = load_dataset(fs::path(o.data) / kHeldoutFile);
  const auto r = grid_search_weights(teachers, heldout, o.grid_step.value_or(cfg.grid_step));
  write_text(o.out, weights_json(r).dump(2) + "\n");
  std::printf("weights");
  for (double w : r.weights.weights) std::printf(" %g", w);
  std::printf("  heldout FER %.4f over %zu candidates\n", r.error_rate, r.candidates.size());
  return 0;
}

int cmd_dump_labels(const Options &o) {
  const auto cfg = read_config(o);
  const auto teachers = load_teachers(o, cfg);
  const auto w = resolve_weights(o, cfg);
  const std::size_t k = o.k.value_or(*std::max_element(cfg.ks.begin(), cfg.ks.end()));
  const auto cache = dump_soft_labels(teachers, w, student_train(o, cfg), k, o.temperature.value_or(cfg.temperature));
  save_cache(o.out, cache);
  std::printf("%zu records, k = %zu\n", cache.records.size(), cache.k);
  return 0;
}

int cmd_train_student(const Options &o) {
  const auto cfg = read_config(o);
  const auto cache = load_cache(o.cache);
  DistillationConfig dc;
  dc.k = o.k.value_or(cache.k);
  dc.lambda = o.lambda.value_or(cfg.lambdas.front());
  dc.temperature = o.temperature.value_or(cache.temperature);
  const auto spec = cfg.student.network(cfg.synth.feature_dim, cfg.synth.num_classes);
  const auto r = train_student(spec, student_train(o, cfg), cache, dc, cfg.training, student_seed(pick_seed(o, cfg)));
  save_model(o.out, {spec, r.params});
  std::printf("student k = %zu lambda = %g: final epoch loss %.6f\n", dc.k, dc.lambda,
              r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back());
  return 0;
}

int cmd_evaluate(const Options &o) {
  const auto ds = split_file(o, o.split);
  std::vector<Model> models;
  for (const auto &p : o.model_files) models.push_back(load_model(p));
  FrameErrorRate fer;
  if (models.size() == 1) {
    fer = evaluate(models.front(), ds);
  } else {
    const auto w = o.weights.empty() ? FusionWeights::uniform(models.size()) : read_weights(o.weights);
    fer = evaluate_ensemble(models, w, ds, o.temperature.value_or(1.0));
  }
  std::printf("split,errors,frames,frame_error_rate\n%s,%zu,%zu,%s\n", o.split.c_str(), fer.errors, fer.frames,
              format_number(fer.rate()).c_str());
  return 0;
}

int cmd_run_experiment(const Options &o) {
  auto cfg = read_config(o);
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.k) cfg.ks = {*o.k};
  if (o.lambda) cfg.lambdas = {*o.lambda};
  if (o.temperature) cfg.temperature = *o.temperature;
  if (o.grid_step) cfg.grid_step = *o.grid_step;
  cfg.validate();
  const auto res = run_experiment(cfg);
  const fs::path dir(o.out);
  write_text(dir / "results.csv", results_csv(res.table));
  write_text(dir / "results.txt", results_text_table(res.table));
  write_text(dir / "topk_mass.csv", topk_csv(res.topk_curve));
  write_text(dir / "config.json", serialize_config(cfg));
  std::cout << results_text_table(res.table);
  return 0;
}

int cmd_topk_curve(const Options &o) {
  const auto cfg = read_config(o);
  Matrix post;
  if (!o.cache.empty()) {
    // From a cache only f_k for k up to the cached arity is recoverable.
    const auto cache = load_cache(o.cache);
    post = Matrix::Zero(static_cast<Eigen::Index>(cache.records.size()), static_cast<Eigen::Index>(cache.num_classes));
    for (std::size_t r = 0; r < cache.records.size(); ++r)
      for (const auto &e : cache.records[r].label.entries) post(static_cast<Eigen::Index>(r), e.class_id) = e.prob;
  } else {
    const auto teachers = load_teachers(o, cfg);
    const auto w = resolve_weights(o, cfg);
    post = teacher_posterior(ensemble_logits(teachers, student_train(o, cfg)), w,
                             o.temperature.value_or(cfg.temperature));
  }
  std::vector<std::size_t> ks(static_cast<std::size_t>(post.cols()));
  std::iota(ks.begin(), ks.end(), std::size_t{1});
  const auto curve = topk_mass_curve(post, ks);
  write_text(o.out, topk_csv(curve));
  for (const auto &p : curve)
    if (p.k == 1 || p.k == 5 || p.k == 10 || p.k == ks.size()) std::printf("f_%zu = %.4f\n", p.k, p.mean_mass);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Essence knowledge distillation: ensemble teachers, top-k soft labels, multitask students"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App *c, bool required = true) {
    auto *opt = c->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    if (required) opt->required();
  };
  auto add_seed = [&](CLI::App *c) { c->add_option("--seed", o.seed, "Run seed (default: first seed in config)"); };
  auto add_out = [&](CLI::App *c, const char *what) { c->add_option("--out", o.out, what)->required(); };
  auto add_data = [&](CLI::App *c) {
    c->add_option("--data", o.data, "Directory written by gen-data")->required()->check(CLI::ExistingDirectory);
  };
  auto add_models = [&](CLI::App *c) {
    c->add_option("--models", o.models, "Directory holding teacher_<i>.ekdm")->check(CLI::ExistingDirectory);
  };

  auto *gen = app.add_subcommand("gen-data", "Generate the synthetic corpus and its speed-perturbed training split");
  add_config(gen);
  add_seed(gen);
  add_out(gen, "Output directory");

  auto *tt = app.add_subcommand("train-teacher", "Train teacher sub-models (or the student architecture) on hard labels");
  add_config(tt);
  add_seed(tt);
  add_data(tt);
  add_out(tt, "Output directory for model files");
  tt->add_option("--member", o.member, "Train only this teacher index");
  tt->add_flag("--student-arch", o.student_arch, "Train the student architecture as a hard-label baseline");

  auto *fsrch = app.add_subcommand("fuse-search", "Grid-search fusion weights on the held-out split");
  add_config(fsrch);
  add_data(fsrch);
  add_models(fsrch);
  fsrch->add_option("--grid-step", o.grid_step, "Simplex grid step (must divide 1)");
  add_out(fsrch, "Output weights file (JSON)");

  auto *dump = app.add_subcommand("dump-labels", "Write top-k teacher soft labels for the training split");
  add_config(dump);
  add_data(dump);
  add_models(dump);
  dump->add_option("--weights", o.weights, "Fusion weights file from fuse-search");
  dump->add_option("--k", o.k, "Number of teacher outputs kept per frame");
  dump->add_option("--temperature", o.temperature, "Softmax temperature");
  add_out(dump, "Output cache file");

  auto *ts = app.add_subcommand("train-student", "Train the student on hard labels plus cached soft labels");
  add_config(ts);
  add_seed(ts);
  add_data(ts);
  ts->add_option("--cache", o.cache, "Soft-label cache from dump-labels")->required()->check(CLI::ExistingFile);
  ts->add_option("--k", o.k, "Use only the top k cached entries");
  ts->add_option("--lambda", o.lambda, "Weight of the hard-label term, in [0, 1]");
  ts->add_option("--temperature", o.temperature, "Must match the cache temperature");
  add_out(ts, "Output model file");

  auto *ev = app.add_subcommand("evaluate", "Frame error rate of a model, or of a fused ensemble");
  add_data(ev);
  ev->add_option("--model", o.model_files, "Model file; repeat to evaluate a fused ensemble")->required();
  ev->add_option("--weights", o.weights, "Fusion weights file (default: uniform)");
  ev->add_option("--split", o.split, "train, heldout or test")->check(CLI::IsMember({"train", "heldout", "test"}));
  ev->add_option("--temperature", o.temperature, "Softmax temperature for the fused posterior");

  auto *run = app.add_subcommand("run-experiment", "Full protocol over all configured seeds, k and lambda values");
  add_config(run);
  add_seed(run);
  run->add_option("--k", o.k, "Override the k sweep with a single value");
  run->add_option("--lambda", o.lambda, "Override the lambda sweep with a single value");
  run->add_option("--temperature", o.temperature, "Override the teacher temperature");
  run->add_option("--grid-step", o.grid_step, "Override the fusion grid step");
  add_out(run, "Output directory for results.csv, results.txt, topk_mass.csv");

  auto *tk = app.add_subcommand("topk-curve", "Mean top-k probability mass of the fused teacher, k = 1..C");
  add_config(tk);
  add_data(tk);
  add_models(tk);
  tk->add_option("--weights", o.weights, "Fusion weights file");
  tk->add_option("--cache", o.cache, "Read posteriors from a soft-label cache instead of the teachers");
  tk->add_option("--temperature", o.temperature, "Softmax temperature");
  add_out(tk, "Output CSV file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*tt) return cmd_train_teacher(o);
    if (*fsrch) return cmd_fuse_search(o);
    if (*dump) return cmd_dump_labels(o);
    if (*ts) return cmd_train_student(o);
    if (*ev) return cmd_evaluate(o);
    if (*run) return cmd_run_experiment(o);
    if (*tk) return cmd_topk_curve(o);
  } catch (const std::exception &e) {
    std::fprintf(stderr, "ekd: error: %s\n", e.what());
    return 1;
  }
  return 2;
}
