// ekd/pipeline.hpp

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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ekd/common.hpp"
#include "ekd/data.hpp"
#include "ekd/distill.hpp"
#include "ekd/fusion.hpp"
#include "ekd/io.hpp"
#include "ekd/nn.hpp"

namespace ekd {

struct TrainHyperparams {
  std::size_t epochs = 8;
  std::size_t batch_size = 64;
  double lr_initial = 0.1;
  double lr_final = 0.01;

  void validate() const {
    require_param(batch_size >= 1, "batch_size must be positive");
    require_param(lr_final > 0.0 && lr_initial >= lr_final, "need lr_initial >= lr_final > 0");
  }
  bool operator==(const TrainHyperparams &) const = default;
};

struct TrainResult {
  ParameterSet params;
  std::vector<double> epoch_losses;  // mean per-frame objective of each epoch
};

/// Per-frame soft targets aligned with the rows of a FrameSet.
using SoftTargets = std::vector<SparseDistribution>;

/// Minibatch SGD on the mean per-frame objective
/// lambda * CE(hard label) + (1 - lambda) * CE(soft target). With no soft
/// targets the objective is plain cross-entropy and lambda must be 1.
inline TrainResult train_frames(const NetworkSpec &spec, const FrameSet &frames, const SoftTargets *soft,
                                double lambda, const TrainHyperparams &hp, std::uint64_t seed) {
  spec.validate();
  hp.validate();
  require_param(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  require_param(soft != nullptr || lambda == 1.0, "soft targets required when lambda < 1");
  require_shape(static_cast<std::size_t>(frames.inputs.cols()) == spec.input_dim(),
                "spliced input width does not match network input");
  if (soft) require_shape(soft->size() == frames.num_frames(), "soft targets do not cover every frame");
  for (auto l : frames.labels) require_shape(l < spec.num_classes, "label exceeds network classes");

  TrainResult result;
  result.params = init_params(spec, derive_seed(seed, 1));
  const std::size_t n = frames.num_frames();
  if (hp.epochs == 0 || n == 0) return result;

  Rng order_rng(derive_seed(seed, 2));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches_per_epoch = (n + hp.batch_size - 1) / hp.batch_size;
  const std::size_t total_steps = hp.epochs * batches_per_epoch;
  const SparseDistribution no_soft;
  const auto in_dim = frames.inputs.cols();
  const auto c = static_cast<Eigen::Index>(spec.num_classes);

  std::size_t step = 0;
  Matrix batch, grad;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += hp.batch_size) {
      const std::size_t rows = std::min(hp.batch_size, n - start);
      batch.resize(static_cast<Eigen::Index>(rows), in_dim);
      for (std::size_t r = 0; r < rows; ++r)
        batch.row(static_cast<Eigen::Index>(r)) = frames.inputs.row(static_cast<Eigen::Index>(order[start + r]));
      ForwardResult fwd;
      try {
        fwd = forward(spec, result.params, batch);
      } catch (const NumericError &e) {
        throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      const Matrix v = softmax(fwd.logits, 1.0);
      grad.resize(static_cast<Eigen::Index>(rows), c);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t f = order[start + r];
        const auto &q = soft ? (*soft)[f] : no_soft;
        std::span<const double> vr(v.row(static_cast<Eigen::Index>(r)).data(), spec.num_classes);
        std::span<double> gr(grad.row(static_cast<Eigen::Index>(r)).data(), spec.num_classes);
        loss_sum += combined_loss(vr, frames.labels[f], q, lambda);
        combined_loss_grad_logits(vr, frames.labels[f], q, lambda, gr);
      }
      grad /= static_cast<double>(rows);
      const auto grads = backward(spec, result.params, fwd.cache, grad);
      apply_sgd(result.params, grads, lr_at(step, total_steps, hp.lr_initial, hp.lr_final));
      ++step;
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(mean_loss)) throw TrainingError("training diverged in epoch " + std::to_string(epoch));
    result.epoch_losses.push_back(mean_loss);
  }
  return result;
}

/// Cross-entropy training on hard labels.
inline TrainResult train_model(const NetworkSpec &spec, const Dataset &ds, const TrainHyperparams &hp,
                               std::uint64_t seed) {
  require_shape(ds.feature_dim == spec.feature_dim, "dataset feature_dim does not match network");
  return train_frames(spec, splice_dataset(ds, spec.context), nullptr, 1.0, hp, seed);
}

/// Logits for every frame of the dataset, evaluated in chunks.
inline Matrix dataset_logits(const Model &m, const FrameSet &fs) {
  Matrix out(static_cast<Eigen::Index>(fs.num_frames()), static_cast<Eigen::Index>(m.spec.num_classes));
  constexpr Eigen::Index kChunk = 4096;
  for (Eigen::Index start = 0; start < out.rows(); start += kChunk) {
    const auto rows = std::min(kChunk, out.rows() - start);
    out.middleRows(start, rows) = predict_logits(m.spec, m.params, fs.inputs.middleRows(start, rows));
  }
  return out;
}

inline Matrix dataset_logits(const Model &m, const Dataset &ds) {
  require_shape(ds.feature_dim == m.spec.feature_dim, "dataset feature_dim does not match network");
  return dataset_logits(m, splice_dataset(ds, m.spec.context));
}

inline std::vector<ClassId> dataset_labels(const Dataset &ds) {
  std::vector<ClassId> labels;
  labels.reserve(ds.total_frames());
  for (const auto &u : ds.utterances) labels.insert(labels.end(), u.labels.begin(), u.labels.end());
  return labels;
}

struct FrameErrorRate {
  std::size_t errors = 0;
  std::size_t frames = 0;
  double rate() const { return frames == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(frames); }
};

inline FrameErrorRate evaluate(const Model &m, const Dataset &ds) {
  if (ds.total_frames() == 0) throw DataError("evaluate: empty dataset");
  const auto labels = dataset_labels(ds);
  return {count_frame_errors(dataset_logits(m, ds), labels), labels.size()};
}

inline EnsembleLogits ensemble_logits(const std::vector<Model> &members, const Dataset &ds) {
  if (members.empty()) throw ConfigError("ensemble has no sub-models");
  EnsembleLogits out;
  for (const auto &m : members) {
    require_shape(m.spec.num_classes == members.front().spec.num_classes,
                  "sub-models disagree on output dimensionality");
    out.push_back(dataset_logits(m, ds));
  }
  return out;
}

inline FrameErrorRate evaluate_ensemble(const std::vector<Model> &members, const FusionWeights &w,
                                        const Dataset &ds, double temperature = 1.0) {
  if (ds.total_frames() == 0) throw DataError("evaluate: empty dataset");
  const auto labels = dataset_labels(ds);
  return {count_frame_errors(teacher_posterior(ensemble_logits(members, ds), w, temperature), labels),
          labels.size()};
}

inline GridSearchResult grid_search_weights(const std::vector<Model> &members, const Dataset &heldout, double step) {
  if (heldout.total_frames() == 0) throw DataError("grid search: empty held-out set");
  return grid_search_weights(ensemble_logits(members, heldout), dataset_labels(heldout), step);
}

/// Builds a cache from teacher posteriors whose rows follow the utterance
/// order of `ds`. Records come out sorted by (utt_id, frame_index).
inline SoftLabelCache cache_from_posteriors(const Matrix &posteriors, const Dataset &ds, std::size_t k,
                                            double temperature, const FusionWeights &w,
                                            std::uint32_t fingerprint) {
  require_param(k >= 1, "k must be at least 1");
  require_shape(static_cast<std::size_t>(posteriors.rows()) == ds.total_frames(), "posterior rows != frames");
  SoftLabelCache cache;
  cache.num_classes = static_cast<std::size_t>(posteriors.cols());
  cache.k = k;
  cache.temperature = temperature;
  cache.teacher_fingerprint = fingerprint;
  cache.weights = w;
  std::vector<std::size_t> offsets{0};
  for (const auto &u : ds.utterances) offsets.push_back(offsets.back() + u.num_frames());
  std::vector<std::size_t> by_id(ds.utterances.size());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return ds.utterances[a].utt_id < ds.utterances[b].utt_id; });
  cache.records.reserve(ds.total_frames());
  for (auto ui : by_id) {
    const auto &u = ds.utterances[ui];
    for (std::size_t t = 0; t < u.num_frames(); ++t) {
      const auto row = posteriors.row(static_cast<Eigen::Index>(offsets[ui] + t));
      cache.records.push_back({u.utt_id, static_cast<std::uint32_t>(t),
                               essence_select(std::span<const double>(row.data(), cache.num_classes), k)});
    }
  }
  return cache;
}

/// Top-k essence labels of the fused teacher for every frame of `ds`.
inline SoftLabelCache dump_soft_labels(const std::vector<Model> &teachers, const FusionWeights &w, const Dataset &ds,
                                       std::size_t k, double temperature) {
  if (teachers.empty()) throw ConfigError("dump_soft_labels: no teacher sub-models");
  require_param(w.size() == teachers.size(), "dump_soft_labels: weight count != teacher count");
  const Matrix post = teacher_posterior(ensemble_logits(teachers, ds), w, temperature);
  return cache_from_posteriors(post, ds, k, temperature, w, teacher_fingerprint(teachers));
}

/// Renormalised top-k soft targets for every frame of `ds`, in utterance order.
/// k may be smaller than the cache's k; larger is allowed only when the cache
/// already holds every class.
inline SoftTargets soft_targets_for(const SoftLabelCache &cache, const Dataset &ds, std::size_t k) {
  require_param(k >= 1, "k must be at least 1");
  if (k > cache.k && cache.k < cache.num_classes)
    throw ConfigError("cache holds top-" + std::to_string(cache.k) + " labels, cannot serve k = " + std::to_string(k));
  require_shape(cache.num_classes == ds.num_classes, "cache class count does not match dataset");
  std::map<std::string, std::size_t> first_record;
  for (std::size_t i = 0; i < cache.records.size(); ++i)
    if (cache.records[i].frame_index == 0) first_record.emplace(cache.records[i].utt_id, i);
  SoftTargets out;
  out.reserve(ds.total_frames());
  for (const auto &u : ds.utterances) {
    const auto it = first_record.find(u.utt_id);
    for (std::size_t t = 0; t < u.num_frames(); ++t) {
      const std::size_t idx = it == first_record.end() ? cache.records.size() : it->second + t;
      if (idx >= cache.records.size() || cache.records[idx].utt_id != u.utt_id || cache.records[idx].frame_index != t)
        throw DataError("soft-label cache has no entry for frame " + std::to_string(t) + " of '" + u.utt_id + "'");
      const auto &label = cache.records[idx].label;
      if (k >= label.entries.size()) {
        out.push_back(renormalize(label));
      } else {
        SparseSoftLabel cut;
        cut.k = k;
        for (std::size_t i = 0; i < k; ++i) {
          cut.entries.push_back(label.entries[i]);
          cut.retained_mass += label.entries[i].prob;
        }
        out.push_back(renormalize(cut));
      }
    }
  }
  return out;
}

/// Multitask student training on hard labels and renormalised top-k teacher labels.
inline TrainResult train_student(const NetworkSpec &spec, const Dataset &ds, const SoftLabelCache &cache,
                                 const DistillationConfig &cfg, const TrainHyperparams &hp, std::uint64_t seed) {
  cfg.validate();
  require_shape(ds.feature_dim == spec.feature_dim, "dataset feature_dim does not match network");
  require_shape(cache.num_classes == spec.num_classes, "cache class count does not match student");
  if (cache.temperature != cfg.temperature)
    throw ConfigError("cache was built at temperature " + std::to_string(cache.temperature) + ", config asks for " +
                      std::to_string(cfg.temperature));
  const auto targets = soft_targets_for(cache, ds, cfg.k);
  return train_frames(spec, splice_dataset(ds, spec.context), &targets, cfg.lambda, hp, seed);
}

// ---- experiment protocol ----

/// Feedforward architecture expressed independently of data dimensions.
struct ArchSpec {
  ContextWindow context;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::kRelu;

  NetworkSpec network(std::size_t feature_dim, std::size_t num_classes) const {
    return make_network_spec(feature_dim, context, hidden, activation, num_classes);
  }
  bool operator==(const ArchSpec &) const = default;
};

enum class StudentData { kAugmented, kOriginal };

struct ExperimentConfig {
  SynthConfig synth;
  std::vector<double> speed_factors{0.9, 1.0, 1.1};
  std::vector<ArchSpec> teachers;
  ArchSpec student;
  std::vector<std::size_t> ks{1, 5, 10, 20, 50};
  std::vector<double> lambdas{0.5};
  double temperature = 1.0;
  std::optional<FusionWeights> fusion_weights;  // unset: grid search on held-out data
  double grid_step = 0.1;
  TrainHyperparams training;
  StudentData student_data = StudentData::kAugmented;
  std::vector<std::uint64_t> seeds{1};

  void validate() const {
    synth.validate();
    training.validate();
    if (teachers.size() < 2) throw ConfigError("need at least two teacher sub-models");
    for (std::size_t i = 0; i < teachers.size(); ++i)
      for (std::size_t j = i + 1; j < teachers.size(); ++j)
        if (teachers[i] == teachers[j]) throw ConfigError("teacher sub-models must differ in architecture");
    try {
      for (const auto &t : teachers) (void)t.network(synth.feature_dim, synth.num_classes);
      (void)student.network(synth.feature_dim, synth.num_classes);
      if (fusion_weights) {
        fusion_weights->validate();
        require_param(fusion_weights->size() == teachers.size(), "one fusion weight per teacher required");
      } else {
        (void)grid_resolution(grid_step);
      }
      DistillationConfig{0.5, 1, temperature}.validate();
      for (auto k : ks) require_param(k >= 1, "k values must be at least 1");
      for (auto l : lambdas) require_param(l >= 0.0 && l <= 1.0, "lambda values must lie in [0, 1]");
      for (auto a : speed_factors) require_param(a > 0.0, "speed factors must be positive");
    } catch (const Error &e) {
      throw ConfigError(e.what());
    }
    if (speed_factors.empty()) throw ConfigError("speed_factors is empty");
    if (ks.empty() || lambdas.empty()) throw ConfigError("k and lambda sweeps must be non-empty");
    if (seeds.empty()) throw ConfigError("no seeds configured");
  }
};

struct ResultRow {
  std::string model;
  std::optional<std::size_t> k;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  Split split = Split::kTest;
  FrameErrorRate fer;
  bool operator==(const ResultRow &o) const {
    return model == o.model && k == o.k && lambda == o.lambda && seed == o.seed && split == o.split &&
           fer.errors == o.fer.errors && fer.frames == o.fer.frames;
  }
};

struct ResultsTable {
  std::vector<ResultRow> rows;
};

struct ExperimentResult {
  ResultsTable table;
  std::vector<TopkMassPoint> topk_curve;  // mean over seeds of the per-seed curves
  std::vector<FusionWeights> weights;     // per seed
};

inline constexpr const char *kResultsCsvHeader = "model,k,lambda,seed,split,errors,frames,frame_error_rate";

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string results_csv(const ResultsTable &t) {
  std::ostringstream os;
  os << kResultsCsvHeader << '\n';
  for (const auto &r : t.rows) {
    os << r.model << ',' << (r.k ? std::to_string(*r.k) : "NA") << ',' << (r.lambda ? format_number(*r.lambda) : "NA")
       << ',' << r.seed << ',' << to_string(r.split) << ',' << r.fer.errors << ',' << r.fer.frames << ','
       << format_number(r.fer.rate()) << '\n';
  }
  return os.str();
}

inline std::string topk_csv(const std::vector<TopkMassPoint> &curve) {
  std::ostringstream os;
  os << "k,mean_topk_mass\n";
  for (const auto &p : curve) os << p.k << ',' << format_number(p.mean_mass) << '\n';
  return os.str();
}

struct SummaryRow {
  std::string model;
  std::optional<std::size_t> k;
  std::optional<double> lambda;
  Split split = Split::kTest;
  double mean_fer = 0.0;
  std::size_t runs = 0;
};

/// Mean frame error rate per (model, k, lambda, split) across seeds, in order of
/// first appearance.
inline std::vector<SummaryRow> summarize(const ResultsTable &t) {
  std::vector<SummaryRow> out;
  for (const auto &r : t.rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow &s) {
      return s.model == r.model && s.k == r.k && s.lambda == r.lambda && s.split == r.split;
    });
    if (it == out.end()) {
      out.push_back({r.model, r.k, r.lambda, r.split, 0.0, 0});
      it = std::prev(out.end());
    }
    it->mean_fer += r.fer.rate();
    ++it->runs;
  }
  for (auto &s : out) s.mean_fer /= static_cast<double>(s.runs);
  return out;
}

inline std::string results_text_table(const ResultsTable &t) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %6s %7s %8s %10s %5s\n", "model", "k", "lambda", "split", "mean FER", "runs");
  os << line;
  for (const auto &s : summarize(t)) {
    std::snprintf(line, sizeof(line), "%-14s %6s %7s %8s %9.2f%% %5zu\n", s.model.c_str(),
                  s.k ? std::to_string(*s.k).c_str() : "NA", s.lambda ? format_number(*s.lambda).c_str() : "NA",
                  to_string(s.split).c_str(), 100.0 * s.mean_fer, s.runs);
    os << line;
  }
  return os.str();
}

/// Worker count for concurrent seeds: EKD_MAX_WORKERS if set, else hardware threads.
inline std::size_t max_workers() {
  if (const char *env = std::getenv("EKD_MAX_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline SynthConfig synth_for_seed(const ExperimentConfig &cfg, std::uint64_t seed) {
  SynthConfig s = cfg.synth;
  s.seed = cfg.synth.seed + seed;
  return s;
}

struct SeedOutcome {
  std::vector<ResultRow> rows;
  std::vector<TopkMassPoint> curve;
  FusionWeights weights;
};

inline std::uint64_t teacher_seed(std::uint64_t seed, std::size_t i) { return derive_seed(seed, 100 + i); }
inline std::uint64_t student_seed(std::uint64_t seed) { return derive_seed(seed, 200); }

/// One seed of the protocol: train sub-models, fuse, evaluate, distil across the
/// (k, lambda) sweep.
inline SeedOutcome run_seed(const ExperimentConfig &cfg, std::uint64_t seed) {
  const std::string stage_prefix = "seed " + std::to_string(seed) + ": ";
  std::string stage = "data";
  try {
    const auto corpus = synth_generate(synth_for_seed(cfg, seed));
    const auto train = augment_speed(corpus.train, cfg.speed_factors);
    const Dataset &student_train = cfg.student_data == StudentData::kAugmented ? train : corpus.train;
    const auto fd = cfg.synth.feature_dim;
    const auto nc = cfg.synth.num_classes;
    SeedOutcome out;
    auto add_row = [&](const std::string &model, std::optional<std::size_t> k, std::optional<double> lambda,
                       Split split, FrameErrorRate fer) { out.rows.push_back({model, k, lambda, seed, split, fer}); };

    stage = "teachers";
    std::vector<Model> teachers;
    for (std::size_t i = 0; i < cfg.teachers.size(); ++i) {
      const auto spec = cfg.teachers[i].network(fd, nc);
      teachers.push_back({spec, train_model(spec, train, cfg.training, teacher_seed(seed, i)).params});
    }

    stage = "fusion";
    out.weights = cfg.fusion_weights ? *cfg.fusion_weights : grid_search_weights(teachers, corpus.heldout, cfg.grid_step).weights;

    stage = "baseline";
    const auto student_spec = cfg.student.network(fd, nc);
    const Model baseline{student_spec, train_model(student_spec, student_train, cfg.training, student_seed(seed)).params};

    stage = "evaluation";
    for (Split split : {Split::kHeldout, Split::kTest}) {
      const Dataset &ds = split == Split::kHeldout ? corpus.heldout : corpus.test;
      for (std::size_t i = 0; i < teachers.size(); ++i)
        add_row("sub_model_" + std::to_string(i), std::nullopt, std::nullopt, split, evaluate(teachers[i], ds));
      add_row("teacher", std::nullopt, std::nullopt, split, evaluate_ensemble(teachers, out.weights, ds, cfg.temperature));
      add_row("baseline", std::nullopt, std::nullopt, split, evaluate(baseline, ds));
    }

    stage = "soft labels";
    const Matrix post = teacher_posterior(ensemble_logits(teachers, student_train), out.weights, cfg.temperature);
    std::vector<std::size_t> curve_ks(nc);
    std::iota(curve_ks.begin(), curve_ks.end(), std::size_t{1});
    out.curve = topk_mass_curve(post, curve_ks);
    const auto fingerprint = teacher_fingerprint(teachers);

    stage = "students";
    const FrameSet student_frames = splice_dataset(student_train, student_spec.context);
    for (auto k : cfg.ks) {
      const auto cache = cache_from_posteriors(post, student_train, k, cfg.temperature, out.weights, fingerprint);
      const auto targets = soft_targets_for(cache, student_train, k);
      for (double lambda : cfg.lambdas) {
        const Model student{student_spec, train_frames(student_spec, student_frames, &targets, lambda, cfg.training,
                                                       student_seed(seed))
                                              .params};
        add_row("student", k, lambda, Split::kHeldout, evaluate(student, corpus.heldout));
        add_row("student", k, lambda, Split::kTest, evaluate(student, corpus.test));
      }
    }
    return out;
  } catch (const Error &e) {
    throw TrainingError(stage_prefix + stage + ": " + e.what());
  }
}

/// Runs every configured seed (concurrently, up to max_workers()) and merges
/// results in seed order.
inline ExperimentResult run_experiment(const ExperimentConfig &cfg) {
  cfg.validate();
  std::vector<std::optional<SeedOutcome>> outcomes(cfg.seeds.size());
  std::vector<std::string> errors(cfg.seeds.size());
  const std::size_t workers = std::min(max_workers(), cfg.seeds.size());
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < cfg.seeds.size(); i += workers) {
      try {
        outcomes[i] = run_seed(cfg, cfg.seeds[i]);
      } catch (const std::exception &e) {
        errors[i] = e.what();
      }
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (const auto &e : errors)
    if (!e.empty()) throw TrainingError(e);

  ExperimentResult res;
  for (auto &o : outcomes) {
    res.table.rows.insert(res.table.rows.end(), o->rows.begin(), o->rows.end());
    res.weights.push_back(o->weights);
    if (res.topk_curve.empty()) {
      res.topk_curve = o->curve;
    } else {
      for (std::size_t i = 0; i < res.topk_curve.size(); ++i) res.topk_curve[i].mean_mass += o->curve[i].mean_mass;
    }
  }
  for (auto &p : res.topk_curve) p.mean_mass /= static_cast<double>(outcomes.size());
  return res;
}

}  // namespace ekd
