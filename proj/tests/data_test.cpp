// tests/data_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ekd/data.hpp"
#include "test_util.hpp"

namespace ekd {
namespace {

Utterance ramp_utterance(std::size_t n, std::size_t dim = 2) {
  Utterance u;
  u.utt_id = "ramp";
  u.frames.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  u.labels.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t d = 0; d < dim; ++d)
      u.frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = static_cast<double>(t) + 1000.0 * d;
    u.labels[t] = static_cast<ClassId>(t % 7);
  }
  return u;
}

TEST(Synth, DeterministicPerSeed) {
  SynthConfig cfg;
  cfg.utterances_per_split = 5;
  cfg.label_noise = 0.1;
  const auto a = synth_generate(cfg);
  const auto b = synth_generate(cfg);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.heldout, b.heldout);
  EXPECT_EQ(a.test, b.test);
  cfg.seed = 2;
  EXPECT_FALSE(a.train == synth_generate(cfg).train);
}

TEST(Synth, ShapesAndSplits) {
  SynthConfig cfg;
  cfg.num_classes = 6;
  cfg.feature_dim = 3;
  cfg.utterances_per_split = 4;
  cfg.mean_utterance_length = 40;
  const auto c = synth_generate(cfg);
  for (const Dataset *ds : {&c.train, &c.heldout, &c.test}) {
    EXPECT_NO_THROW(ds->validate());
    EXPECT_EQ(ds->utterances.size(), 4u);
    for (const auto &u : ds->utterances) {
      EXPECT_GE(u.num_frames(), 20u);
      EXPECT_LE(u.num_frames(), 60u);
      EXPECT_EQ(u.frames.cols(), 3);
    }
  }
  EXPECT_EQ(c.train.utterances[0].utt_id, "train-00000");
  EXPECT_EQ(c.heldout.utterances[0].utt_id, "heldout-00000");
}

// Nearest-centre classification; returns (errors, frames, errors more than
// `settle` frames after a label change).
struct NearestCentre {
  std::size_t errors = 0, frames = 0, late_errors = 0;
};

NearestCentre nearest_centre(const SynthCorpus &c, std::size_t settle) {
  NearestCentre out;
  for (const auto &u : c.test.utterances) {
    std::size_t since_change = settle + 1;
    for (Eigen::Index t = 0; t < u.frames.rows(); ++t) {
      const auto ut = static_cast<std::size_t>(t);
      since_change = (ut > 0 && u.labels[ut] != u.labels[ut - 1]) ? 0 : since_change + 1;
      Eigen::Index nearest = 0;
      (c.class_centers.rowwise() - u.frames.row(t)).rowwise().squaredNorm().minCoeff(&nearest);
      const bool wrong = static_cast<ClassId>(nearest) != u.labels[ut];
      out.errors += wrong;
      out.late_errors += wrong && since_change > settle;
      ++out.frames;
    }
  }
  return out;
}

TEST(Synth, SeparableLimitIsTriviallyClassified) {
  SynthConfig cfg;
  cfg.class_separation = 50.0;
  cfg.utterances_per_split = 10;
  cfg.smoothing = 1.0;
  const auto instant = nearest_centre(synth_generate(cfg), 0);
  EXPECT_EQ(instant.errors, 0u);

  // With trajectory smoothing the only confusions sit right after label changes.
  cfg.smoothing = 0.6;
  const auto smoothed = nearest_centre(synth_generate(cfg), 2);
  EXPECT_LT(static_cast<double>(smoothed.errors) / static_cast<double>(smoothed.frames), 0.05);
  EXPECT_EQ(smoothed.late_errors, 0u);
}

TEST(Synth, ClassPriorsFollowStationaryDistribution) {
  SynthConfig cfg;
  cfg.num_classes = 5;
  cfg.utterances_per_split = 40;
  cfg.mean_utterance_length = 100;
  const auto chain = label_chain(cfg);
  for (Eigen::Index r = 0; r < chain.transition.rows(); ++r) EXPECT_NEAR(chain.transition.row(r).sum(), 1.0, 1e-12);

  // Stationary distribution by power iteration on the configured chain.
  RowVector pi = RowVector::Constant(5, 0.2);
  for (int i = 0; i < 10000; ++i) pi = pi * chain.transition;

  const auto c = synth_generate(cfg);
  std::vector<double> counts(5, 0.0);
  double total = 0.0;
  for (const Dataset *ds : {&c.train, &c.heldout, &c.test})
    for (const auto &u : ds->utterances)
      for (auto l : u.labels) {
        counts[l] += 1.0;
        total += 1.0;
      }
  ASSERT_GE(total, 10000.0);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(counts[static_cast<std::size_t>(i)] / total, pi(i), 0.05) << "class " << i;
}

TEST(Synth, SegmentsAreLong) {
  SynthConfig cfg;
  cfg.utterances_per_split = 20;
  const auto c = synth_generate(cfg);
  std::size_t segments = 0, frames = 0;
  for (const auto &u : c.train.utterances) {
    ++segments;
    for (std::size_t t = 1; t < u.labels.size(); ++t) segments += u.labels[t] != u.labels[t - 1];
    frames += u.labels.size();
  }
  EXPECT_GE(static_cast<double>(frames) / static_cast<double>(segments), 5.0);
}

TEST(Synth, InvalidConfig) {
  SynthConfig cfg;
  cfg.num_classes = 0;
  EXPECT_THROW(synth_generate(cfg), ParameterError);
  cfg = {};
  cfg.mean_utterance_length = 0;
  EXPECT_THROW(synth_generate(cfg), ParameterError);
  cfg = {};
  cfg.label_noise = 0.5;
  EXPECT_THROW(synth_generate(cfg), ParameterError);
  cfg = {};
  cfg.class_separation = 0.0;
  EXPECT_THROW(synth_generate(cfg), ParameterError);
}

TEST(SpeedPerturb, IdentityFactor) {
  const auto u = ramp_utterance(30);
  EXPECT_EQ(speed_perturb(u, 1.0), u);
}

TEST(SpeedPerturb, Lengths) {
  const auto u = ramp_utterance(100);
  EXPECT_EQ(speed_perturb(u, 0.9).num_frames(), 111u);
  EXPECT_EQ(speed_perturb(u, 1.1).num_frames(), 91u);
  EXPECT_EQ(speed_perturb(u, 0.9).utt_id, "sp0.9-ramp");
  EXPECT_DOUBLE_EQ(speed_perturb(u, 1.1).speed_factor, 1.1);
}

TEST(SpeedPerturb, InterpolatesAndResamplesLabels) {
  const auto u = ramp_utterance(50);
  for (double a : {0.9, 1.1, 0.5, 2.0}) {
    const auto w = speed_perturb(u, a);
    for (std::size_t t = 0; t < w.num_frames(); ++t) {
      const double pos = std::min(a * static_cast<double>(t), 49.0);
      EXPECT_NEAR(w.frames(static_cast<Eigen::Index>(t), 0), pos, 1e-9);
      EXPECT_NEAR(w.frames(static_cast<Eigen::Index>(t), 1), pos + 1000.0, 1e-9);
      const auto nearest = std::min<long>(49, std::lround(a * static_cast<double>(t)));
      EXPECT_EQ(w.labels[t], u.labels[static_cast<std::size_t>(nearest)]);
    }
  }
}

TEST(SpeedPerturb, RoundTripLength) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + rng.below(300);
    const double a = rng.uniform(0.8, 1.25);
    const auto u = ramp_utterance(n, 1);
    const auto back = speed_perturb(speed_perturb(u, a), 1.0 / a);
    EXPECT_LE(std::abs(static_cast<long>(back.num_frames()) - static_cast<long>(n)), 1) << "n=" << n << " a=" << a;
  }
}

TEST(SpeedPerturb, Errors) {
  const auto u = ramp_utterance(10);
  EXPECT_THROW(speed_perturb(u, 0.0), ParameterError);
  EXPECT_THROW(speed_perturb(u, -1.0), ParameterError);
  Utterance empty;
  empty.frames.resize(0, 2);
  EXPECT_THROW(speed_perturb(empty, 0.9), DataError);
}

TEST(AugmentSpeed, TriplesCorpus) {
  SynthConfig cfg;
  cfg.utterances_per_split = 7;
  const auto c = synth_generate(cfg);
  const std::vector<double> factors{0.9, 1.0, 1.1};
  const auto aug = augment_speed(c.train, factors);
  EXPECT_EQ(aug.utterances.size(), 21u);
  EXPECT_NO_THROW(aug.validate());
  for (std::size_t i = 1; i < aug.utterances.size(); ++i)
    EXPECT_LT(aug.utterances[i - 1].utt_id, aug.utterances[i].utt_id);
}

TEST(Splice, NoContextIsIdentity) {
  const auto u = ramp_utterance(12, 3);
  const auto s = splice_context(u, 0, 0);
  EXPECT_EQ(s.rows, u.frames);
  EXPECT_EQ(s.labels, u.labels);
}

TEST(Splice, SingleFramePadding) {
  const auto u = ramp_utterance(1, 2);
  const auto s = splice_context(u, 2, 1);
  ASSERT_EQ(s.rows.rows(), 1);
  ASSERT_EQ(s.rows.cols(), 8);
  for (int w = 0; w < 4; ++w) {
    EXPECT_EQ(s.rows(0, 2 * w), u.frames(0, 0));
    EXPECT_EQ(s.rows(0, 2 * w + 1), u.frames(0, 1));
  }
}

TEST(Splice, WindowContentsAndRowCount) {
  const auto u = ramp_utterance(9, 1);
  for (std::size_t left : {0u, 1u, 3u})
    for (std::size_t right : {0u, 2u, 12u}) {
      const auto s = splice_context(u, left, right);
      EXPECT_EQ(s.rows.rows(), 9);
      EXPECT_EQ(s.labels, u.labels);
      for (long t = 0; t < 9; ++t)
        for (long w = 0; w < static_cast<long>(left + right + 1); ++w)
          EXPECT_EQ(s.rows(t, w), std::clamp<long>(t - static_cast<long>(left) + w, 0, 8));
    }
}

TEST(Splice, DatasetOffsets) {
  SynthConfig cfg;
  cfg.utterances_per_split = 3;
  const auto c = synth_generate(cfg);
  const auto fs = splice_dataset(c.train, {1, 1});
  EXPECT_EQ(fs.num_frames(), c.train.total_frames());
  EXPECT_EQ(fs.inputs.cols(), static_cast<Eigen::Index>(3 * cfg.feature_dim));
  ASSERT_EQ(fs.utt_offsets.size(), 4u);
  EXPECT_EQ(fs.utt_offsets.back(), fs.num_frames());
  const auto &u1 = c.train.utterances[1];
  const auto s1 = splice_context(u1, 1, 1);
  EXPECT_EQ(Matrix(fs.inputs.middleRows(static_cast<Eigen::Index>(fs.utt_offsets[1]), s1.rows.rows())), s1.rows);
}

}  // namespace
}  // namespace ekd
