/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmasum/matrix.hpp"

namespace dmasum {

// Change points 0 = c_0 < c_1 < ... < c_k = T; segment j is [c_j, c_{j+1}).
class SegmentList {
 public:
  SegmentList() = default;
  // Throws InputError unless the boundaries are strictly increasing from 0.
  explicit SegmentList(std::vector<std::size_t> boundaries);
  static SegmentList single(std::size_t frames);

  std::size_t frames() const { return boundaries_.empty() ? 0 : boundaries_.back(); }
  std::size_t count() const { return boundaries_.empty() ? 0 : boundaries_.size() - 1; }
  std::size_t begin(std::size_t segment) const { return boundaries_[segment]; }
  std::size_t end(std::size_t segment) const { return boundaries_[segment + 1]; }
  std::size_t length(std::size_t segment) const { return end(segment) - begin(segment); }
  std::size_t segment_of(std::size_t frame) const;

  const std::vector<std::size_t>& boundaries() const { return boundaries_; }
  // Interior change points c_1 .. c_{k-1}.
  std::vector<std::size_t> change_points() const;

  friend bool operator==(const SegmentList&, const SegmentList&) = default;

 private:
  std::vector<std::size_t> boundaries_;
};

struct FixedSegmentation {
  SegmentList segments;
  double cost = 0.0;  // summed within-segment squared deviation from the segment mean
};

// Optimal split into exactly `segments` pieces under the linear kernel.
FixedSegmentation kts_fixed(const Matrix& features, std::size_t segments);

// Kernel temporal segmentation with a linear (dot-product) kernel. The number
// of change points m minimises cost(m) + penalty * m * (log(T / m) + 1), with
// at most max_segments segments; max_segments = 0 means ceil(T / 15).
// Throws InputError when T < 2.
SegmentList kts_segment(const Matrix& features, double penalty = 1.0,
                        std::size_t max_segments = 0);

inline constexpr double kDefaultBudget = 0.15;

struct Summary {
  std::vector<std::uint8_t> selected;  // one flag per frame
  double budget = kDefaultBudget;

  std::size_t selected_count() const;
};

// Exact 0/1 knapsack: indices of the chosen items (ascending) maximising the
// total value with total weight <= capacity. An item is taken only when it
// strictly improves the value, so ties resolve towards fewer items.
std::vector<std::size_t> knapsack_solve(std::span<const double> values,
                                        std::span<const std::size_t> weights,
                                        std::size_t capacity);

// Segment value = mean frame score, weight = frame count, capacity =
// floor(budget * T). Chosen segments are marked frame by frame.
Summary knapsack_select(std::span<const double> frame_scores, const SegmentList& segments,
                        double budget = kDefaultBudget);

// Frame scores and key-shot selections of U annotators for one video.
struct UserAnnotations {
  Matrix scores;                                   // U x T, entries in [0, 1]
  std::vector<std::vector<std::uint8_t>> summaries;  // U binary vectors of length T
  std::vector<double> mean;                        // length T

  std::size_t annotators() const { return scores.rows(); }
  std::size_t frames() const { return scores.cols(); }
  void validate() const;
};

enum class F1Aggregation { kMean, kMax };

std::string_view aggregation_name(F1Aggregation agg);
F1Aggregation parse_aggregation(std::string_view text);

// Harmonic mean of frame-overlap precision and recall, as a percentage.
double f1_score(std::span<const std::uint8_t> machine, std::span<const std::uint8_t> user);

// f1_score against every user summary, aggregated by mean or max.
double f1_keyshot(std::span<const std::uint8_t> machine, const UserAnnotations& users,
                  F1Aggregation agg);

// Tie-aware Kendall tau-b in O(n log n). Throws UndefinedCoefficientError when
// either side is entirely tied, InputError on length mismatch or n < 2.
double kendall_tau(std::span<const double> x, std::span<const double> y);

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson correlation of average ranks. Throws UndefinedCoefficientError when
// either rank vector has zero variance.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct RankCorrelation {
  double tau = 0.0;
  double rho = 0.0;
  std::size_t tau_used = 0;
  std::size_t rho_used = 0;
  std::size_t tau_skipped = 0;
  std::size_t rho_skipped = 0;
};

// Coefficients against every annotator's frame scores, averaged over the
// annotators for which the coefficient is defined. Throws
// UndefinedCoefficientError if no annotator yields a defined value.
RankCorrelation rank_correlation_protocol(std::span<const double> pred,
                                          const UserAnnotations& users);

// Captured mean-annotator importance as frames are taken in descending order
// of a ranking score, normalised so that taking every frame gives 1.
struct CorrelationCurve {
  std::vector<double> fractions;
  std::vector<double> model;
  std::vector<double> mean_annotator;  // upper envelope: ranking by the target itself
  std::vector<double> random_expectation;
  std::vector<std::vector<double>> annotators;
};

// Captured importance after the top `fraction` of frames under `ranking`,
// linearly interpolated between whole frames. Ties are broken by frame index.
double captured_importance(std::span<const double> ranking, std::span<const double> importance,
                           double fraction);

CorrelationCurve correlation_curve(std::span<const double> pred, const UserAnnotations& users,
                                   std::size_t samples);

// CSV `fraction,model,mean_annotator,random_expectation,annotator_1,...`.
std::string curve_csv(const CorrelationCurve& curve);

// Self-contained SVG polyline plot of the same series.
std::string curve_svg(const CorrelationCurve& curve, const std::string& title);

}  // namespace dmasum
