// ekd/data.hpp

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
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ekd/common.hpp"
#include "ekd/nn.hpp"

namespace ekd {

enum class Split { kTrain, kHeldout, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kHeldout: return "heldout";
    case Split::kTest: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string &s) {
  if (s == "train") return Split::kTrain;
  if (s == "heldout") return Split::kHeldout;
  if (s == "test") return Split::kTest;
  throw ParameterError("unknown split '" + s + "'");
}

struct Utterance {
  std::string utt_id;
  Matrix frames;  // one feature vector per row
  std::vector<ClassId> labels;
  double speed_factor = 1.0;

  std::size_t num_frames() const { return labels.size(); }
  bool operator==(const Utterance &o) const {
    return utt_id == o.utt_id && labels == o.labels && speed_factor == o.speed_factor &&
           frames.rows() == o.frames.rows() && frames.cols() == o.frames.cols() && frames == o.frames;
  }
};

struct Dataset {
  std::vector<Utterance> utterances;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  Split split = Split::kTrain;

  std::size_t total_frames() const {
    std::size_t n = 0;
    for (const auto &u : utterances) n += u.num_frames();
    return n;
  }

  void validate() const {
    if (num_classes == 0 || feature_dim == 0) throw DataError("dataset has zero classes or features");
    std::set<std::string> ids;
    for (const auto &u : utterances) {
      if (u.labels.empty()) throw DataError("utterance '" + u.utt_id + "' is empty");
      if (static_cast<std::size_t>(u.frames.rows()) != u.labels.size() ||
          static_cast<std::size_t>(u.frames.cols()) != feature_dim)
        throw DataError("utterance '" + u.utt_id + "' frame/label shape mismatch");
      if (!(u.speed_factor > 0.0)) throw DataError("utterance '" + u.utt_id + "' has non-positive speed factor");
      for (auto l : u.labels)
        if (l >= num_classes) throw DataError("utterance '" + u.utt_id + "' has out-of-range label");
      if (!ids.insert(u.utt_id).second) throw DataError("duplicate utt_id '" + u.utt_id + "'");
    }
  }

  bool operator==(const Dataset &) const = default;
};

struct SynthConfig {
  std::size_t num_classes = 16;
  std::size_t feature_dim = 8;
  std::size_t utterances_per_split = 20;
  std::size_t mean_utterance_length = 100;
  double class_separation = 1.0;
  double label_noise = 0.0;
  std::uint64_t seed = 1;
  double mean_segment_length = 8.0;
  // Fraction of the gap to the current class centre closed per frame.
  double smoothing = 0.6;
  double process_noise = 0.3;
  double observation_noise = 1.0;

  void validate() const {
    require_param(num_classes >= 2, "synth: need at least two classes");
    require_param(feature_dim >= 1, "synth: feature_dim must be positive");
    require_param(utterances_per_split >= 1, "synth: utterances_per_split must be positive");
    require_param(mean_utterance_length >= 2, "synth: mean_utterance_length must be at least 2");
    require_param(class_separation > 0.0, "synth: class_separation must be positive");
    require_param(label_noise >= 0.0 && label_noise < 0.5, "synth: label_noise must lie in [0, 0.5)");
    require_param(mean_segment_length >= 5.0, "synth: mean_segment_length must be at least 5 frames");
    require_param(smoothing > 0.0 && smoothing <= 1.0, "synth: smoothing must lie in (0, 1]");
    require_param(process_noise >= 0.0 && observation_noise >= 0.0, "synth: noise levels must be non-negative");
  }
};

struct SynthCorpus {
  Dataset train;
  Dataset heldout;
  Dataset test;
  Matrix class_centers;
};

/// Label Markov chain of the generator: stay with probability 1 - 1/L for mean
/// segment length L, otherwise jump to another class j with probability
/// proportional to a seeded per-class weight.
struct LabelChain {
  std::vector<double> class_weights;  // normalised
  Matrix transition;                  // row-stochastic
};

inline LabelChain label_chain(const SynthConfig &cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x1abe1));
  const auto c = cfg.num_classes;
  LabelChain chain;
  chain.class_weights.resize(c);
  double total = 0.0;
  for (auto &w : chain.class_weights) {
    w = 0.5 + rng.uniform();
    total += w;
  }
  for (auto &w : chain.class_weights) w /= total;
  const double stay = 1.0 - 1.0 / cfg.mean_segment_length;
  chain.transition = Matrix::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < c; ++i) {
    const double others = 1.0 - chain.class_weights[i];
    for (std::size_t j = 0; j < c; ++j)
      chain.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          i == j ? stay : (1.0 - stay) * chain.class_weights[j] / others;
  }
  return chain;
}

namespace detail {

inline ClassId sample_from(Rng &rng, std::span<const double> probs) {
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    if (u < probs[i]) return static_cast<ClassId>(i);
    u -= probs[i];
  }
  return static_cast<ClassId>(probs.size() - 1);
}

inline Dataset generate_split(const SynthConfig &cfg, const LabelChain &chain, const Matrix &centers,
                              Split split) {
  Rng rng(derive_seed(cfg.seed, 0x5911 + static_cast<std::uint64_t>(split)));
  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.feature_dim = cfg.feature_dim;
  ds.split = split;
  const auto d = static_cast<Eigen::Index>(cfg.feature_dim);
  const std::size_t lo = std::max<std::size_t>(1, cfg.mean_utterance_length / 2);
  const std::size_t span_len = cfg.mean_utterance_length - lo;
  for (std::size_t n = 0; n < cfg.utterances_per_split; ++n) {
    Utterance u;
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%05zu", to_string(split).c_str(), n);
    u.utt_id = id;
    const std::size_t len = lo + static_cast<std::size_t>(rng.below(2 * span_len + 1));
    u.frames.resize(static_cast<Eigen::Index>(len), d);
    u.labels.resize(len);

    ClassId label = sample_from(rng, chain.class_weights);
    RowVector state = centers.row(label);
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) {
        const auto row = chain.transition.row(label);
        label = sample_from(rng, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        state(j) += cfg.smoothing * (centers(label, j) - state(j)) + cfg.process_noise * rng.normal();
        u.frames(static_cast<Eigen::Index>(t), j) = state(j) + cfg.observation_noise * rng.normal();
      }
      ClassId recorded = label;
      if (split == Split::kTrain && cfg.label_noise > 0.0 && rng.uniform() < cfg.label_noise) {
        recorded = static_cast<ClassId>(rng.below(cfg.num_classes - 1));
        if (recorded >= label) ++recorded;
      }
      u.labels[t] = recorded;
    }
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

}  // namespace detail

/// Synthetic frame-classification corpus: features follow a smoothed random
/// walk towards Gaussian class centres while labels follow a segmental Markov
/// chain, so neighbouring frames carry information about the current class.
inline SynthCorpus synth_generate(const SynthConfig &cfg) {
  cfg.validate();
  const auto chain = label_chain(cfg);
  Rng rng(derive_seed(cfg.seed, 0xce17e5));
  SynthCorpus corpus;
  corpus.class_centers.resize(static_cast<Eigen::Index>(cfg.num_classes), static_cast<Eigen::Index>(cfg.feature_dim));
  for (Eigen::Index i = 0; i < corpus.class_centers.rows(); ++i)
    for (Eigen::Index j = 0; j < corpus.class_centers.cols(); ++j)
      corpus.class_centers(i, j) = cfg.class_separation * rng.normal();
  corpus.train = detail::generate_split(cfg, chain, corpus.class_centers, Split::kTrain);
  corpus.heldout = detail::generate_split(cfg, chain, corpus.class_centers, Split::kHeldout);
  corpus.test = detail::generate_split(cfg, chain, corpus.class_centers, Split::kTest);
  return corpus;
}

inline std::string speed_tag(double factor) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sp%g-", factor);
  return buf;
}

/// Time-warps an utterance to x(a t): output frame t reads the input at
/// position a * t by linear interpolation, labels by nearest neighbour.
/// a > 1 shortens, a < 1 lengthens. a == 1 returns the utterance unchanged.
inline Utterance speed_perturb(const Utterance &u, double factor) {
  require_param(factor > 0.0 && std::isfinite(factor), "speed factor must be positive");
  if (u.labels.empty()) throw DataError("speed_perturb: empty utterance '" + u.utt_id + "'");
  if (factor == 1.0) return u;
  const std::size_t n = u.labels.size();
  const auto out_len = static_cast<std::size_t>(
      std::max<long>(1, std::lround(static_cast<double>(n) / factor)));
  Utterance out;
  out.utt_id = speed_tag(factor) + u.utt_id;
  out.speed_factor = u.speed_factor * factor;
  out.frames.resize(static_cast<Eigen::Index>(out_len), u.frames.cols());
  out.labels.resize(out_len);
  for (std::size_t t = 0; t < out_len; ++t) {
    const double pos = factor * static_cast<double>(t);
    const auto base = static_cast<std::size_t>(std::floor(pos));
    const auto row = static_cast<Eigen::Index>(t);
    if (base + 1 >= n) {
      out.frames.row(row) = u.frames.row(static_cast<Eigen::Index>(n - 1));
    } else {
      const double frac = pos - static_cast<double>(base);
      const auto b = static_cast<Eigen::Index>(base);
      out.frames.row(row) = (1.0 - frac) * u.frames.row(b) + frac * u.frames.row(b + 1);
    }
    const auto nearest = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::lround(pos)));
    out.labels[t] = u.labels[nearest];
  }
  return out;
}

/// Applies every factor to every utterance; the result is ordered by utt_id.
inline Dataset augment_speed(const Dataset &ds, std::span<const double> factors) {
  require_param(!factors.empty(), "augment_speed: no factors");
  Dataset out;
  out.num_classes = ds.num_classes;
  out.feature_dim = ds.feature_dim;
  out.split = ds.split;
  for (double a : factors)
    for (const auto &u : ds.utterances) out.utterances.push_back(speed_perturb(u, a));
  std::sort(out.utterances.begin(), out.utterances.end(),
            [](const Utterance &a, const Utterance &b) { return a.utt_id < b.utt_id; });
  out.validate();
  return out;
}

struct SplicedUtterance {
  Matrix rows;
  std::vector<ClassId> labels;
};

/// Row t is frames[t - left .. t + right] concatenated, edges padded by repeating
/// the first/last frame.
inline SplicedUtterance splice_context(const Utterance &u, std::size_t left, std::size_t right) {
  if (u.labels.empty()) throw DataError("splice_context: empty utterance '" + u.utt_id + "'");
  const auto n = static_cast<std::ptrdiff_t>(u.labels.size());
  const auto d = u.frames.cols();
  const auto width = static_cast<Eigen::Index>(left + right + 1);
  SplicedUtterance out;
  out.rows.resize(n, d * width);
  out.labels = u.labels;
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    for (Eigen::Index w = 0; w < width; ++w) {
      const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(t - static_cast<std::ptrdiff_t>(left) + w, 0, n - 1);
      out.rows.block(t, w * d, 1, d) = u.frames.row(src);
    }
  }
  return out;
}

/// A whole dataset spliced into one input matrix, rows in utterance order.
struct FrameSet {
  Matrix inputs;
  std::vector<ClassId> labels;
  std::vector<std::string> utt_ids;
  std::vector<std::size_t> utt_offsets;  // first row of each utterance, plus a final end offset

  std::size_t num_frames() const { return labels.size(); }
};

inline FrameSet splice_dataset(const Dataset &ds, ContextWindow ctx) {
  FrameSet fs;
  const std::size_t total = ds.total_frames();
  fs.inputs.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(ds.feature_dim * ctx.width()));
  fs.labels.reserve(total);
  std::size_t row = 0;
  for (const auto &u : ds.utterances) {
    auto s = splice_context(u, ctx.left, ctx.right);
    fs.utt_ids.push_back(u.utt_id);
    fs.utt_offsets.push_back(row);
    fs.inputs.middleRows(static_cast<Eigen::Index>(row), s.rows.rows()) = s.rows;
    fs.labels.insert(fs.labels.end(), s.labels.begin(), s.labels.end());
    row += s.labels.size();
  }
  fs.utt_offsets.push_back(row);
  return fs;
}

}  // namespace ekd
