// ekd/distill.hpp

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
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ekd/common.hpp"

namespace ekd {

/// Floor applied inside every logarithm of a student probability.
inline constexpr double kProbFloor = 1e-30;

inline double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

struct SparseEntry {
  ClassId class_id = 0;
  double prob = 0.0;
  bool operator==(const SparseEntry &) const = default;
};

/// Top-k teacher probabilities as produced by the teacher, before
/// renormalization. Entries are sorted by probability, descending, with ties
/// broken toward the lower class id. retained_mass is the sum of the entries,
/// i.e. the share of the teacher posterior that survived the cut.
struct SparseSoftLabel {
  std::vector<SparseEntry> entries;
  double retained_mass = 0.0;
  std::size_t k = 0;
  bool operator==(const SparseSoftLabel &) const = default;
};

/// A probability distribution that is zero outside `entries`.
struct SparseDistribution {
  std::vector<SparseEntry> entries;
  bool operator==(const SparseDistribution &) const = default;
};

struct DistillationConfig {
  double lambda = 0.5;
  std::size_t k = 5;
  double temperature = 1.0;

  void validate() const {
    require_param(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
    require_param(k >= 1, "k must be at least 1");
    require_param(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
  }
};

namespace detail {

inline void check_label(std::size_t label, std::size_t num_classes) {
  require_param(label < num_classes, "label " + std::to_string(label) + " out of range for " +
                                         std::to_string(num_classes) + " classes");
}

inline void check_sparse(const SparseDistribution &q, std::size_t num_classes) {
  for (const auto &e : q.entries)
    require_shape(e.class_id < num_classes, "sparse class id " + std::to_string(e.class_id) +
                                                " out of range for " + std::to_string(num_classes) +
                                                " classes");
}

inline void check_lambda(double lambda) {
  require_param(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
}

}  // namespace detail

/// Hard-label cross-entropy, -log v[label].
inline double ce_loss(std::span<const double> v, std::size_t label) {
  detail::check_label(label, v.size());
  return -floored_log(v[label]);
}

/// Soft-label cross-entropy H(q, v) = -sum_i q_i log v_i. Zero entries of q
/// contribute exactly zero.
inline double kd_loss(std::span<const double> v, std::span<const double> q) {
  require_shape(v.size() == q.size(), "kd_loss: distributions differ in size");
  double loss = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) loss -= q[i] * floored_log(v[i]);
  return loss;
}

inline double kd_loss(std::span<const double> v, const SparseDistribution &q) {
  detail::check_sparse(q, v.size());
  double loss = 0.0;
  for (const auto &e : q.entries)
    if (e.prob > 0.0) loss -= e.prob * floored_log(v[e.class_id]);
  return loss;
}

/// Shannon entropy -sum q_i log q_i, with 0 log 0 = 0.
inline double entropy(std::span<const double> q) {
  double h = 0.0;
  for (double p : q)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

inline double entropy(const SparseDistribution &q) {
  double h = 0.0;
  for (const auto &e : q.entries)
    if (e.prob > 0.0) h -= e.prob * std::log(e.prob);
  return h;
}

/// D_KL(q || v), summed directly over the support of q.
inline double kl_divergence(std::span<const double> q, std::span<const double> v) {
  require_shape(v.size() == q.size(), "kl_divergence: distributions differ in size");
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) d += q[i] * (std::log(q[i]) - floored_log(v[i]));
  return d;
}

inline double combined_loss(std::span<const double> v, std::size_t label, std::span<const double> q,
                            double lambda) {
  detail::check_lambda(lambda);
  return lambda * ce_loss(v, label) + (1.0 - lambda) * kd_loss(v, q);
}

inline double combined_loss(std::span<const double> v, std::size_t label, const SparseDistribution &q,
                            double lambda) {
  detail::check_lambda(lambda);
  return lambda * ce_loss(v, label) + (1.0 - lambda) * kd_loss(v, q);
}

/// Gradient of combined_loss w.r.t. the student logits, where v = softmax(logits)
/// at temperature 1 and q sums to one: lambda (v - onehot) + (1 - lambda)(v - q).
/// Written into `out`, which must have v.size() elements.
inline void combined_loss_grad_logits(std::span<const double> v, std::size_t label,
                                      const SparseDistribution &q, double lambda,
                                      std::span<double> out) {
  detail::check_lambda(lambda);
  detail::check_label(label, v.size());
  detail::check_sparse(q, v.size());
  require_shape(out.size() == v.size(), "gradient buffer size mismatch");
  const double mu = 1.0 - lambda;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = lambda * v[i] + mu * v[i];
  out[label] -= lambda;
  for (const auto &e : q.entries) out[e.class_id] -= mu * e.prob;
}

inline std::vector<double> combined_loss_grad_logits(std::span<const double> v, std::size_t label,
                                                     std::span<const double> q, double lambda) {
  detail::check_lambda(lambda);
  detail::check_label(label, v.size());
  require_shape(q.size() == v.size(), "combined_loss_grad_logits: distributions differ in size");
  std::vector<double> g(v.size());
  const double mu = 1.0 - lambda;
  for (std::size_t i = 0; i < v.size(); ++i) g[i] = lambda * (v[i] - (i == label ? 1.0 : 0.0)) + mu * (v[i] - q[i]);
  return g;
}

/// Keeps the k largest probabilities of q (ties toward the lower class id).
inline SparseSoftLabel essence_select(std::span<const double> q, std::size_t k) {
  require_param(k >= 1, "essence_select: k must be at least 1");
  require_shape(!q.empty(), "essence_select: empty distribution");
  const std::size_t keep = std::min(k, q.size());
  std::vector<ClassId> idx(q.size());
  std::iota(idx.begin(), idx.end(), ClassId{0});
  auto by_prob = [&](ClassId a, ClassId b) { return q[a] > q[b] || (q[a] == q[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), by_prob);

  SparseSoftLabel s;
  s.k = k;
  s.entries.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    s.entries.push_back({idx[i], q[idx[i]]});
    s.retained_mass += q[idx[i]];
  }
  return s;
}

inline SparseDistribution renormalize(const SparseSoftLabel &s) {
  if (!(s.retained_mass > 0.0) || !std::isfinite(s.retained_mass))
    throw NumericError("renormalize: retained mass must be positive");
  SparseDistribution d;
  d.entries.reserve(s.entries.size());
  for (const auto &e : s.entries) d.entries.push_back({e.class_id, e.prob / s.retained_mass});
  return d;
}

inline std::vector<double> to_dense(const SparseDistribution &d, std::size_t num_classes) {
  detail::check_sparse(d, num_classes);
  std::vector<double> out(num_classes, 0.0);
  for (const auto &e : d.entries) out[e.class_id] = e.prob;
  return out;
}

/// f_k(q): the sum of the k largest values of q.
inline double topk_mass(std::span<const double> q, std::size_t k) {
  return essence_select(q, k).retained_mass;
}

struct TopkMassPoint {
  std::size_t k = 0;
  double mean_mass = 0.0;
};

/// Mean of f_k(q) over the rows of `posteriors`, for each requested k.
inline std::vector<TopkMassPoint> topk_mass_curve(const Matrix &posteriors, std::span<const std::size_t> ks) {
  if (posteriors.rows() == 0) throw DataError("topk_mass_curve: no posteriors");
  for (auto k : ks) require_param(k >= 1, "topk_mass_curve: k must be at least 1");
  const auto num_classes = static_cast<std::size_t>(posteriors.cols());
  std::vector<double> totals(ks.size(), 0.0);
  std::vector<double> sorted(num_classes);
  std::vector<double> prefix(num_classes + 1);
  for (Eigen::Index r = 0; r < posteriors.rows(); ++r) {
    for (std::size_t c = 0; c < num_classes; ++c) sorted[c] = posteriors(r, static_cast<Eigen::Index>(c));
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    prefix[0] = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) prefix[c + 1] = prefix[c] + sorted[c];
    for (std::size_t i = 0; i < ks.size(); ++i) totals[i] += prefix[std::min(ks[i], num_classes)];
  }
  std::vector<TopkMassPoint> curve;
  curve.reserve(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i)
    curve.push_back({ks[i], totals[i] / static_cast<double>(posteriors.rows())});
  return curve;
}

}  // namespace ekd
