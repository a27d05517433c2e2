// tests/fusion_test.cpp

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

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ekd/fusion.hpp"
#include "test_util.hpp"

namespace ekd {
namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

TEST(FusionWeights, Validation) {
  EXPECT_NO_THROW((FusionWeights{{0.5, 0.5}}.validate()));
  EXPECT_NO_THROW(FusionWeights::uniform(3).validate());
  EXPECT_THROW((FusionWeights{{0.6, 0.6}}.validate()), ParameterError);
  EXPECT_THROW((FusionWeights{{1.5, -0.5}}.validate()), ParameterError);
  EXPECT_THROW((FusionWeights{{}}.validate()), ParameterError);
}

TEST(FuseLogits, Examples) {
  Rng rng(1);
  const Matrix z = testing::random_matrix(rng, 4, 3);
  EXPECT_EQ(fuse_logits({z}, FusionWeights{{1.0}}), z);
  EXPECT_EQ(fuse_logits({z, z}, FusionWeights{{0.5, 0.5}}), z);

  const Matrix fused = fuse_logits({row({1, 2, 3}), row({3, 0, -1})}, FusionWeights{{0.5, 0.5}});
  EXPECT_EQ(fused, row({2, 1, 1}));

  EXPECT_THROW(fuse_logits({z, z}, FusionWeights{{1.0}}), ParameterError);
  EXPECT_THROW(fuse_logits({z, z}, FusionWeights{{0.7, 0.7}}), ParameterError);
  EXPECT_THROW(fuse_logits({z, Matrix::Zero(4, 2)}, FusionWeights{{0.5, 0.5}}), ShapeError);
}

TEST(TeacherPosterior, Examples) {
  Rng rng(2);
  const Matrix z = testing::random_matrix(rng, 3, 5);
  EXPECT_EQ(teacher_posterior({z}, FusionWeights{{1.0}}, 1.0), softmax(z, 1.0));

  const Matrix flat = Matrix::Constant(2, 4, 3.0);
  const Matrix q = teacher_posterior({flat, flat}, FusionWeights{{0.3, 0.7}}, 2.0);
  EXPECT_LE((q.array() - 0.25).abs().maxCoeff(), 1e-15);

  // softmax(0.5 [1,2,3] + 0.5 [3,0,-1]) = softmax([2,1,1]) = [e, 1, 1] / (e + 2)
  const Matrix toy = teacher_posterior({row({1, 2, 3}), row({3, 0, -1})}, FusionWeights{{0.5, 0.5}}, 1.0);
  EXPECT_NEAR(toy(0, 0), 0.5761168847658291, 1e-15);
  EXPECT_NEAR(toy(0, 1), 0.21194155761708544, 1e-15);
  EXPECT_NEAR(toy(0, 2), 0.21194155761708544, 1e-15);
  EXPECT_THROW(teacher_posterior({z}, FusionWeights{{1.0}}, 0.0), ParameterError);
}

TEST(FuseLogits, PermutationEquivarianceAndConvexity) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(3);
    EnsembleLogits ens;
    std::vector<double> w(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      ens.push_back(testing::random_matrix(rng, 5, 6, 3.0));
      w[i] = rng.uniform();
      sum += w[i];
    }
    for (auto &x : w) x /= sum;
    const Matrix fused = fuse_logits(ens, FusionWeights{w});

    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    EnsembleLogits ens_p;
    std::vector<double> w_p;
    for (auto i : perm) {
      ens_p.push_back(ens[i]);
      w_p.push_back(w[i]);
    }
    EXPECT_LE((fuse_logits(ens_p, FusionWeights{w_p}) - fused).cwiseAbs().maxCoeff(), 1e-12);

    for (Eigen::Index i = 0; i < fused.size(); ++i) {
      double lo = ens[0].data()[i], hi = lo;
      for (const auto &z : ens) {
        lo = std::min(lo, z.data()[i]);
        hi = std::max(hi, z.data()[i]);
      }
      EXPECT_GE(fused.data()[i], lo - 1e-12);
      EXPECT_LE(fused.data()[i], hi + 1e-12);
    }
  }
}

TEST(SimplexGrid, Cardinality) {
  EXPECT_EQ(simplex_grid(2, 10).size(), 11u);
  EXPECT_EQ(simplex_grid(3, 10).size(), 66u);
  EXPECT_EQ(simplex_grid(1, 10).size(), 1u);
  for (const auto &c : simplex_grid(3, 4)) EXPECT_EQ(c[0] + c[1] + c[2], 4u);
  EXPECT_EQ(simplex_grid(2, 2).front(), (std::vector<std::uint32_t>{2, 0}));
  EXPECT_EQ(grid_resolution(0.1), 10u);
  EXPECT_EQ(grid_resolution(0.25), 4u);
  EXPECT_THROW(grid_resolution(0.3), ParameterError);
  EXPECT_THROW(grid_resolution(0.0), ParameterError);
}

TEST(GridSearch, IdenticalModelsTieToUniform) {
  Rng rng(4);
  const Matrix z = testing::random_matrix(rng, 50, 4);
  std::vector<ClassId> labels(50);
  for (auto &l : labels) l = static_cast<ClassId>(rng.below(4));
  const auto r = grid_search_weights(EnsembleLogits{z, z}, labels, 0.1);
  EXPECT_EQ(r.weights.weights, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(r.candidates.size(), 11u);
  for (const auto &c : r.candidates) EXPECT_EQ(c.errors, r.errors);
}

// Independent re-evaluation of every grid point with explicit loops.
std::size_t oracle_errors(const EnsembleLogits &ens, const std::vector<double> &w, const std::vector<ClassId> &labels) {
  std::size_t errors = 0;
  for (Eigen::Index r = 0; r < ens[0].rows(); ++r) {
    Eigen::Index best = 0;
    double best_val = -1e300;
    for (Eigen::Index c = 0; c < ens[0].cols(); ++c) {
      double v = 0.0;
      for (std::size_t k = 0; k < ens.size(); ++k) v += w[k] * ens[k](r, c);
      if (v > best_val) {
        best_val = v;
        best = c;
      }
    }
    if (static_cast<ClassId>(best) != labels[static_cast<std::size_t>(r)]) ++errors;
  }
  return errors;
}

TEST(GridSearch, PerfectModelWins) {
  Rng rng(5);
  const Eigen::Index n = 200, c = 5;
  std::vector<ClassId> labels(n);
  Matrix perfect = Matrix::Zero(n, c);
  for (Eigen::Index r = 0; r < n; ++r) {
    labels[static_cast<std::size_t>(r)] = static_cast<ClassId>(rng.below(c));
    perfect(r, labels[static_cast<std::size_t>(r)]) = 1.0;
  }
  const Matrix noise = testing::random_matrix(rng, n, c, 100.0);
  const EnsembleLogits ens{noise, perfect};
  const auto r = grid_search_weights(ens, labels, 0.1);
  EXPECT_EQ(r.weights.weights, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(r.errors, 0u);
  for (const auto &cand : r.candidates) {
    const auto want = oracle_errors(ens, cand.weights.weights, labels);
    EXPECT_EQ(cand.errors, want);
    if (cand.weights.weights[1] != 1.0) {
      EXPECT_GT(want, 0u);
    }
  }
}

TEST(GridSearch, NeverWorseThanBestSingleModel) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 120, c = 6;
    std::vector<ClassId> labels(n);
    for (auto &l : labels) l = static_cast<ClassId>(rng.below(c));
    EnsembleLogits ens;
    for (int k = 0; k < 3; ++k) {
      Matrix z = testing::random_matrix(rng, n, c);
      for (Eigen::Index r = 0; r < n; ++r) z(r, labels[static_cast<std::size_t>(r)]) += 1.0;
      ens.push_back(z);
    }
    const auto res = grid_search_weights(ens, labels, 0.25);
    EXPECT_EQ(res.candidates.size(), 15u);
    std::size_t best = SIZE_MAX;
    for (const auto &cand : res.candidates) best = std::min(best, oracle_errors(ens, cand.weights.weights, labels));
    EXPECT_EQ(res.errors, best);
    for (int k = 0; k < 3; ++k) {
      std::vector<double> corner(3, 0.0);
      corner[k] = 1.0;
      EXPECT_LE(res.errors, oracle_errors(ens, corner, labels));
    }
  }
}

TEST(GridSearch, Errors) {
  const Matrix z = Matrix::Zero(3, 2);
  const std::vector<ClassId> labels{0, 1, 0};
  EXPECT_THROW(grid_search_weights(EnsembleLogits{z}, labels, 0.1), ParameterError);
  EXPECT_THROW(grid_search_weights(EnsembleLogits{Matrix(0, 2), Matrix(0, 2)}, std::vector<ClassId>{}, 0.1), DataError);
  EXPECT_THROW(grid_search_weights(EnsembleLogits{z, z}, labels, 0.3), ParameterError);
}

}  // namespace
}  // namespace ekd
