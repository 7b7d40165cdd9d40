/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dmasum/errors.hpp"
#include "dmasum/eval.hpp"
#include "dmasum/format.hpp"

namespace dmasum {

std::size_t Summary::selected_count() const {
  return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), std::uint8_t{1}));
}

std::vector<std::size_t> knapsack_solve(std::span<const double> values,
                                        std::span<const std::size_t> weights,
                                        std::size_t capacity) {
  if (values.size() != weights.size()) throw InputError("knapsack_solve: length mismatch");
  const std::size_t n = values.size();
  // table[i][w]: best value using the first i items within weight w.
  std::vector<std::vector<double>> table(n + 1, std::vector<double>(capacity + 1, 0.0));
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t wi = weights[i - 1];
    for (std::size_t w = 0; w <= capacity; ++w) {
      table[i][w] = table[i - 1][w];
      if (wi <= w) {
        const double with = table[i - 1][w - wi] + values[i - 1];
        if (with > table[i][w]) table[i][w] = with;
      }
    }
  }
  std::vector<std::size_t> chosen;
  std::size_t w = capacity;
  for (std::size_t i = n; i > 0; --i) {
    if (table[i][w] != table[i - 1][w]) {
      chosen.push_back(i - 1);
      w -= weights[i - 1];
    }
  }
  std::reverse(chosen.begin(), chosen.end());
  return chosen;
}

Summary knapsack_select(std::span<const double> frame_scores, const SegmentList& segments,
                        double budget) {
  if (!(budget > 0.0) || budget > 1.0) throw InputError("knapsack_select: budget must be in (0, 1]");
  if (segments.frames() != frame_scores.size()) {
    throw InputError("knapsack_select: segments cover " + std::to_string(segments.frames()) +
                     " frames but there are " + std::to_string(frame_scores.size()) + " scores");
  }
  const std::size_t frames = frame_scores.size();
  const auto capacity = static_cast<std::size_t>(std::floor(budget * static_cast<double>(frames)));

  std::vector<double> values(segments.count());
  std::vector<std::size_t> weights(segments.count());
  for (std::size_t s = 0; s < segments.count(); ++s) {
    double total = 0.0;
    for (std::size_t f = segments.begin(s); f < segments.end(s); ++f) total += frame_scores[f];
    weights[s] = segments.length(s);
    values[s] = total / static_cast<double>(weights[s]);
  }

  Summary summary;
  summary.budget = budget;
  summary.selected.assign(frames, 0);
  for (std::size_t s : knapsack_solve(values, weights, capacity)) {
    std::fill(summary.selected.begin() + static_cast<std::ptrdiff_t>(segments.begin(s)),
              summary.selected.begin() + static_cast<std::ptrdiff_t>(segments.end(s)), 1);
  }
  return summary;
}

void UserAnnotations::validate() const {
  if (annotators() == 0) throw InputError("annotations: at least one annotator required");
  if (summaries.size() != annotators()) throw InputError("annotations: summary count != U");
  if (mean.size() != frames()) throw InputError("annotations: mean length != T");
  for (const auto& s : summaries) {
    if (s.size() != frames()) throw InputError("annotations: summary length != T");
    for (auto v : s)
      if (v > 1) throw InputError("annotations: summaries must be 0/1");
  }
  for (double v : scores.data())
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("annotations: scores must lie in [0, 1]");
}

std::string_view aggregation_name(F1Aggregation agg) {
  return agg == F1Aggregation::kMax ? "max" : "mean";
}

F1Aggregation parse_aggregation(std::string_view text) {
  if (text == "mean") return F1Aggregation::kMean;
  if (text == "max") return F1Aggregation::kMax;
  throw InputError("unknown F1 aggregation '" + std::string(text) + "'");
}

double f1_score(std::span<const std::uint8_t> machine, std::span<const std::uint8_t> user) {
  if (machine.size() != user.size()) throw InputError("f1_score: length mismatch");
  std::size_t overlap = 0, machine_count = 0, user_count = 0;
  for (std::size_t i = 0; i < machine.size(); ++i) {
    machine_count += machine[i] != 0;
    user_count += user[i] != 0;
    overlap += (machine[i] != 0 && user[i] != 0);
  }
  if (overlap == 0) return 0.0;
  // 2PR/(P+R) reduces to 2|overlap|/(|machine|+|user|), which is exactly symmetric.
  return 100.0 * 2.0 * static_cast<double>(overlap) /
         static_cast<double>(machine_count + user_count);
}

double f1_keyshot(std::span<const std::uint8_t> machine, const UserAnnotations& users,
                  F1Aggregation agg) {
  if (users.summaries.empty()) throw InputError("f1_keyshot: no user summaries");
  double total = 0.0;
  double best = 0.0;
  for (const auto& user : users.summaries) {
    const double f = f1_score(machine, user);
    total += f;
    best = std::max(best, f);
  }
  return agg == F1Aggregation::kMax ? best : total / static_cast<double>(users.summaries.size());
}

namespace {

void require_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) throw InputError(std::string(what) + ": length mismatch");
  if (x.size() < 2) throw InputError(std::string(what) + ": need at least two observations");
}

// Pairs tied within each run of equal values in a sorted sequence.
template <typename Equal>
std::uint64_t tied_pairs(std::size_t n, Equal equal) {
  std::uint64_t ties = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      ties += static_cast<std::uint64_t>(run) * (run - 1) / 2;
      run = 1;
    }
  }
  return ties;
}

// Sorts values ascending and returns the number of strict inversions removed.
std::uint64_t merge_count(std::vector<double>& values, std::vector<double>& scratch,
                          std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(values, scratch, lo, mid) + merge_count(values, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (values[j] < values[i]) {
      swaps += mid - i;
      scratch[k++] = values[j++];
    } else {
      scratch[k++] = values[i++];
    }
  }
  while (i < mid) scratch[k++] = values[i++];
  while (j < hi) scratch[k++] = values[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo),
            scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            values.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "kendall_tau");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const std::uint64_t x_ties =
      tied_pairs(n, [&](std::size_t a, std::size_t b) { return x[order[a]] == x[order[b]]; });
  const std::uint64_t joint_ties = tied_pairs(n, [&](std::size_t a, std::size_t b) {
    return x[order[a]] == x[order[b]] && y[order[a]] == y[order[b]];
  });

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> scratch(n);
  const std::uint64_t discordant = merge_count(ys, scratch, 0, n);
  const std::uint64_t y_ties = tied_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });

  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (x_ties == total || y_ties == total) {
    throw UndefinedCoefficientError("kendall_tau: one input is entirely tied");
  }
  // concordant - discordant = total - x_ties - y_ties + joint_ties - 2 * discordant
  const double numerator = static_cast<double>(total) - static_cast<double>(x_ties) -
                           static_cast<double>(y_ties) + static_cast<double>(joint_ties) -
                           2.0 * static_cast<double>(discordant);
  const double denominator = std::sqrt(static_cast<double>(total - x_ties) *
                                       static_cast<double>(total - y_ties));
  return numerator / denominator;
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean(i+1 .. j).
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, "spearman_rho");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCoefficientError("spearman_rho: ranks have zero variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

RankCorrelation rank_correlation_protocol(std::span<const double> pred,
                                          const UserAnnotations& users) {
  if (users.annotators() == 0) throw InputError("rank_correlation_protocol: no annotators");
  if (pred.size() != users.frames()) throw InputError("rank_correlation_protocol: length mismatch");
  RankCorrelation out;
  double tau_sum = 0.0;
  double rho_sum = 0.0;
  for (std::size_t u = 0; u < users.annotators(); ++u) {
    const auto ref = users.scores.row(u);
    try {
      tau_sum += kendall_tau(pred, ref);
      ++out.tau_used;
    } catch (const UndefinedCoefficientError&) {
      ++out.tau_skipped;
    }
    try {
      rho_sum += spearman_rho(pred, ref);
      ++out.rho_used;
    } catch (const UndefinedCoefficientError&) {
      ++out.rho_skipped;
    }
  }
  if (out.tau_used == 0 || out.rho_used == 0) {
    throw UndefinedCoefficientError("rank_correlation_protocol: no annotator gives a defined value");
  }
  out.tau = tau_sum / static_cast<double>(out.tau_used);
  out.rho = rho_sum / static_cast<double>(out.rho_used);
  return out;
}

double captured_importance(std::span<const double> ranking, std::span<const double> importance,
                           double fraction) {
  if (ranking.size() != importance.size() || ranking.empty()) {
    throw InputError("captured_importance: length mismatch");
  }
  fraction = std::clamp(fraction, 0.0, 1.0);
  const std::size_t n = ranking.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ranking[a] > ranking[b]; });
  const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  // An all-zero importance vector carries no ordering information.
  if (!(total > 0.0)) return fraction;
  const double position = fraction * static_cast<double>(n);
  const auto whole = static_cast<std::size_t>(std::floor(position));
  double captured = 0.0;
  for (std::size_t k = 0; k < whole && k < n; ++k) captured += importance[order[k]];
  if (whole < n) captured += (position - static_cast<double>(whole)) * importance[order[whole]];
  return captured / total;
}

CorrelationCurve correlation_curve(std::span<const double> pred, const UserAnnotations& users,
                                   std::size_t samples) {
  if (samples < 2) throw InputError("correlation_curve: need at least two samples");
  if (pred.size() != users.frames()) throw InputError("correlation_curve: length mismatch");
  CorrelationCurve curve;
  curve.annotators.resize(users.annotators());
  for (std::size_t i = 0; i < samples; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(samples - 1);
    curve.fractions.push_back(f);
    curve.model.push_back(captured_importance(pred, users.mean, f));
    curve.mean_annotator.push_back(captured_importance(users.mean, users.mean, f));
    curve.random_expectation.push_back(f);
    for (std::size_t u = 0; u < users.annotators(); ++u) {
      curve.annotators[u].push_back(captured_importance(users.scores.row(u), users.mean, f));
    }
  }
  return curve;
}

std::string curve_csv(const CorrelationCurve& curve) {
  std::ostringstream out;
  out << "fraction,model,mean_annotator,random_expectation";
  for (std::size_t u = 0; u < curve.annotators.size(); ++u) out << ",annotator_" << (u + 1);
  out << '\n';
  for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
    out << format_double(curve.fractions[i]) << ',' << format_double(curve.model[i]) << ','
        << format_double(curve.mean_annotator[i]) << ','
        << format_double(curve.random_expectation[i]);
    for (const auto& a : curve.annotators) out << ',' << format_double(a[i]);
    out << '\n';
  }
  return out.str();
}

std::string curve_svg(const CorrelationCurve& curve, const std::string& title) {
  constexpr double kSize = 400.0;
  constexpr double kMargin = 40.0;
  auto polyline = [&](const std::vector<double>& ys, const char* colour, double width) {
    std::ostringstream p;
    p << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width
      << "\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double px = kMargin + curve.fractions[i] * kSize;
      const double py = kMargin + (1.0 - ys[i]) * kSize;
      p << (i ? " " : "") << px << ',' << py;
    }
    p << "\"/>\n";
    return p.str();
  };
  std::ostringstream svg;
  const double full = kSize + 2 * kMargin;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << full << "\" height=\"" << full
      << "\">\n";
  svg << "<title>" << title << "</title>\n";
  svg << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize
      << "\" height=\"" << kSize << "\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& a : curve.annotators) svg << polyline(a, "#bbbbbb", 1.0);
  svg << polyline(curve.random_expectation, "#555555", 1.0);
  svg << polyline(curve.mean_annotator, "#2a7fff", 1.5);
  svg << polyline(curve.model, "#d62728", 2.0);
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dmasum
