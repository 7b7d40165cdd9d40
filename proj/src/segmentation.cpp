/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmasum/errors.hpp"
#include "dmasum/eval.hpp"

namespace dmasum {

SegmentList::SegmentList(std::vector<std::size_t> boundaries) : boundaries_(std::move(boundaries)) {
  if (boundaries_.size() < 2 || boundaries_.front() != 0) {
    throw InputError("SegmentList: boundaries must start at 0 and contain at least one segment");
  }
  for (std::size_t i = 1; i < boundaries_.size(); ++i) {
    if (boundaries_[i] <= boundaries_[i - 1]) {
      throw InputError("SegmentList: boundaries must be strictly increasing");
    }
  }
}

SegmentList SegmentList::single(std::size_t frames) { return SegmentList({0, frames}); }

std::size_t SegmentList::segment_of(std::size_t frame) const {
  if (frame >= frames()) throw InputError("SegmentList::segment_of: frame out of range");
  auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), frame);
  return static_cast<std::size_t>(it - boundaries_.begin()) - 1;
}

std::vector<std::size_t> SegmentList::change_points() const {
  if (boundaries_.size() <= 2) return {};
  return {boundaries_.begin() + 1, boundaries_.end() - 1};
}

namespace {

// Prefix sums of the Gram matrix X X^T so that the scatter of any interval is
// O(1): cost[a, b) = sum_i K_ii - (1 / (b - a)) * sum_{i,j} K_ij.
class IntervalCost {
 public:
  explicit IntervalCost(const Matrix& x) : n_(x.rows()), block_((n_ + 1) * (n_ + 1)), diag_(n_ + 1) {
    const Matrix gram = matmul(x, transpose(x));
    for (std::size_t i = 0; i < n_; ++i) {
      diag_[i + 1] = diag_[i] + gram(i, i);
      for (std::size_t j = 0; j < n_; ++j) {
        at(i + 1, j + 1) = gram(i, j) + at(i, j + 1) + at(i + 1, j) - at(i, j);
      }
    }
  }

  double operator()(std::size_t a, std::size_t b) const {
    const double inner = at(b, b) - at(a, b) - at(b, a) + at(a, a);
    const double cost = diag_[b] - diag_[a] - inner / static_cast<double>(b - a);
    return std::max(cost, 0.0);
  }

 private:
  double& at(std::size_t i, std::size_t j) { return block_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return block_[i * (n_ + 1) + j]; }

  std::size_t n_;
  std::vector<double> block_;
  std::vector<double> diag_;
};

struct DpTables {
  // best[k][t]: minimal cost of splitting frames [0, t) into k + 1 segments.
  std::vector<std::vector<double>> best;
  std::vector<std::vector<std::size_t>> from;
};

DpTables segment_dp(const IntervalCost& cost, std::size_t frames, std::size_t max_segments) {
  const double inf = std::numeric_limits<double>::infinity();
  DpTables dp;
  dp.best.assign(max_segments, std::vector<double>(frames + 1, inf));
  dp.from.assign(max_segments, std::vector<std::size_t>(frames + 1, 0));
  for (std::size_t t = 1; t <= frames; ++t) dp.best[0][t] = cost(0, t);
  for (std::size_t k = 1; k < max_segments; ++k) {
    for (std::size_t t = k + 1; t <= frames; ++t) {
      double best = inf;
      std::size_t arg = 0;
      for (std::size_t s = k; s < t; ++s) {
        const double c = dp.best[k - 1][s] + cost(s, t);
        if (c < best) {
          best = c;
          arg = s;
        }
      }
      dp.best[k][t] = best;
      dp.from[k][t] = arg;
    }
  }
  return dp;
}

SegmentList backtrack(const DpTables& dp, std::size_t frames, std::size_t segments) {
  std::vector<std::size_t> bounds(segments + 1);
  bounds[segments] = frames;
  std::size_t t = frames;
  for (std::size_t k = segments - 1; k > 0; --k) {
    t = dp.from[k][t];
    bounds[k] = t;
  }
  bounds[0] = 0;
  return SegmentList(std::move(bounds));
}

}  // namespace

FixedSegmentation kts_fixed(const Matrix& features, std::size_t segments) {
  const std::size_t frames = features.rows();
  if (segments == 0 || segments > frames) {
    throw InputError("kts_fixed: segment count must be in [1, T]");
  }
  require_finite(features, "kts_fixed");
  const IntervalCost cost(features);
  const DpTables dp = segment_dp(cost, frames, segments);
  return {backtrack(dp, frames, segments), dp.best[segments - 1][frames]};
}

SegmentList kts_segment(const Matrix& features, double penalty, std::size_t max_segments) {
  const std::size_t frames = features.rows();
  if (frames < 2) throw InputError("kts_segment: need at least 2 frames");
  if (penalty < 0.0) throw InputError("kts_segment: penalty must be non-negative");
  require_finite(features, "kts_segment");
  if (max_segments == 0) max_segments = (frames + 14) / 15;
  max_segments = std::clamp<std::size_t>(max_segments, 1, frames);

  const IntervalCost cost(features);
  const DpTables dp = segment_dp(cost, frames, max_segments);
  const double n = static_cast<double>(frames);
  std::size_t best_segments = 1;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= max_segments; ++k) {
    const double m = static_cast<double>(k - 1);
    const double complexity = k == 1 ? 0.0 : m * (std::log(n / m) + 1.0);
    const double score = dp.best[k - 1][frames] + penalty * complexity;
    if (score < best_score) {
      best_score = score;
      best_segments = k;
    }
  }
  return backtrack(dp, frames, best_segments);
}

}  // namespace dmasum
