// ekd/fusion.hpp

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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ekd/common.hpp"
#include "ekd/nn.hpp"

namespace ekd {

/// One non-negative weight per sub-model, summing to one.
struct FusionWeights {
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }

  void validate() const {
    require_param(!weights.empty(), "fusion weights are empty");
    double sum = 0.0;
    for (double w : weights) {
      require_param(w >= 0.0 && w <= 1.0, "fusion weight " + std::to_string(w) + " outside [0, 1]");
      sum += w;
    }
    require_param(std::abs(sum - 1.0) <= 1e-12, "fusion weights sum to " + std::to_string(sum) + ", not 1");
  }

  static FusionWeights uniform(std::size_t k) {
    require_param(k > 0, "uniform weights need at least one sub-model");
    return FusionWeights{std::vector<double>(k, 1.0 / static_cast<double>(k))};
  }

  bool operator==(const FusionWeights &) const = default;
};

/// Logit matrices of every sub-model on the same batch; all must share shape.
using EnsembleLogits = std::vector<Matrix>;

/// z = sum_k w_k z_k, element-wise.
inline Matrix fuse_logits(const EnsembleLogits &ensemble, const FusionWeights &w) {
  require_param(!ensemble.empty(), "fuse_logits: empty ensemble");
  require_param(w.size() == ensemble.size(), "fuse_logits: " + std::to_string(w.size()) + " weights for " +
                                                 std::to_string(ensemble.size()) + " sub-models");
  w.validate();
  const auto rows = ensemble.front().rows();
  const auto cols = ensemble.front().cols();
  for (const auto &z : ensemble)
    require_shape(z.rows() == rows && z.cols() == cols, "fuse_logits: sub-model outputs differ in shape");
  Matrix fused = w.weights[0] * ensemble[0];
  for (std::size_t k = 1; k < ensemble.size(); ++k) fused.noalias() += w.weights[k] * ensemble[k];
  return fused;
}

inline Matrix teacher_posterior(const EnsembleLogits &ensemble, const FusionWeights &w, double temperature) {
  return softmax(fuse_logits(ensemble, w), temperature);
}

/// Number of rows whose argmax differs from the label.
inline std::size_t count_frame_errors(const Matrix &scores, std::span<const ClassId> labels) {
  require_shape(static_cast<std::size_t>(scores.rows()) == labels.size(), "score rows != label count");
  std::size_t errors = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index idx = 0;
    scores.row(r).maxCoeff(&idx);
    if (static_cast<ClassId>(idx) != labels[static_cast<std::size_t>(r)]) ++errors;
  }
  return errors;
}

/// All K-part compositions of `resolution` units, in lexicographically
/// descending order of the leading counts (all weight on the first sub-model first).
inline std::vector<std::vector<std::uint32_t>> simplex_grid(std::size_t num_models, std::uint32_t resolution) {
  require_param(num_models >= 1, "simplex_grid: need at least one sub-model");
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint32_t> current(num_models, 0);
  auto rec = [&](auto &&self, std::size_t pos, std::uint32_t remaining) -> void {
    if (pos + 1 == num_models) {
      current[pos] = remaining;
      out.push_back(current);
      return;
    }
    for (std::uint32_t c = remaining + 1; c-- > 0;) {
      current[pos] = c;
      self(self, pos + 1, remaining - c);
    }
  };
  rec(rec, 0, resolution);
  return out;
}

/// Number of grid units per unit weight; step must divide 1 evenly.
inline std::uint32_t grid_resolution(double step) {
  require_param(step > 0.0 && step <= 1.0, "grid step must lie in (0, 1]");
  const double n = std::round(1.0 / step);
  require_param(std::abs(n * step - 1.0) <= 1e-9, "grid step " + std::to_string(step) + " does not divide 1");
  return static_cast<std::uint32_t>(n);
}

struct GridCandidate {
  FusionWeights weights;
  std::vector<std::uint32_t> counts;
  std::size_t errors = 0;
};

struct GridSearchResult {
  FusionWeights weights;
  std::size_t errors = 0;
  double error_rate = 0.0;
  std::vector<GridCandidate> candidates;  // every evaluated grid point, enumeration order
};

/// Exhaustive search over the weight simplex at the given step. Picks the
/// fewest held-out frame errors of the fused posterior; ties go to the point
/// closest to uniform weights, then to the earliest point in enumeration order.
inline GridSearchResult grid_search_weights(const EnsembleLogits &heldout_logits,
                                            std::span<const ClassId> heldout_labels, double step,
                                            double temperature = 1.0) {
  require_param(heldout_logits.size() >= 2, "grid search needs at least two sub-models");
  if (heldout_labels.empty()) throw DataError("grid search: empty held-out set");
  const std::uint32_t n = grid_resolution(step);
  const std::size_t k = heldout_logits.size();

  GridSearchResult result;
  std::int64_t best_spread = 0;
  bool have_best = false;
  for (auto &counts : simplex_grid(k, n)) {
    FusionWeights w;
    std::int64_t spread = 0;
    for (auto c : counts) {
      w.weights.push_back(static_cast<double>(c) / static_cast<double>(n));
      const std::int64_t d = static_cast<std::int64_t>(k) * c - n;
      spread += d * d;
    }
    const std::size_t errors = count_frame_errors(teacher_posterior(heldout_logits, w, temperature), heldout_labels);
    if (!have_best || errors < result.errors || (errors == result.errors && spread < best_spread)) {
      have_best = true;
      result.weights = w;
      result.errors = errors;
      best_spread = spread;
    }
    result.candidates.push_back({std::move(w), std::move(counts), errors});
  }
  result.error_rate = static_cast<double>(result.errors) / static_cast<double>(heldout_labels.size());
  return result;
}

}  // namespace ekd
