/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

// Slow, obviously-correct reference implementations used only by tests. None
// of them calls into the library except for plain data types.

#pragma once

#include <unistd.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// O(n^2) pair counting for tau-b.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) {
        ++tied_x;
        ++tied_y;
      } else if (dx == 0.0) {
        ++tied_x;
      } else if (dy == 0.0) {
        ++tied_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(concordant - discordant) /
         std::sqrt((n0 - static_cast<double>(tied_x)) * (n0 - static_cast<double>(tied_y)));
}

// Mid-rank by counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> mid_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      if (v < x[i]) less += 1;
      if (v == x[i]) equal += 1;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(mid_ranks(x), mid_ranks(y));
}

// Best value over all subsets with weight <= capacity.
inline double knapsack_best(const std::vector<double>& values, const std::vector<std::size_t>& weights,
                            std::size_t capacity) {
  const std::size_t n = values.size();
  double best = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double v = 0;
    std::size_t w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) v += values[i], w += weights[i];
    }
    if (w <= capacity && v > best) best = v;
  }
  return best;
}

// Within-segment squared deviation from the segment mean, by direct summation.
inline double scatter(const std::vector<std::vector<double>>& rows, std::size_t a, std::size_t b) {
  const std::size_t d = rows[0].size();
  double cost = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0;
    for (std::size_t t = a; t < b; ++t) mean += rows[t][k];
    mean /= static_cast<double>(b - a);
    for (std::size_t t = a; t < b; ++t) cost += (rows[t][k] - mean) * (rows[t][k] - mean);
  }
  return cost;
}

// Minimum total scatter over every placement of segments - 1 change points.
inline double best_fixed_cost(const std::vector<std::vector<double>>& rows, std::size_t segments) {
  const std::size_t n = rows.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> cuts;
  auto recurse = [&](auto&& self, std::size_t start, std::size_t left) -> void {
    if (left == 0) {
      double c = 0;
      std::size_t prev = 0;
      for (std::size_t cut : cuts) c += scatter(rows, prev, cut), prev = cut;
      c += scatter(rows, prev, n);
      if (c < best) best = c;
      return;
    }
    for (std::size_t p = start; p + left <= n; ++p) {
      cuts.push_back(p);
      self(self, p + 1, left - 1);
      cuts.pop_back();
    }
  };
  recurse(recurse, 1, segments - 1);
  return best;
}

// Bias-corrected Adam on a flat vector, textbook form.
struct ReferenceAdam {
  std::vector<double> m, v;
  long step = 0;
  void apply(std::vector<double>& theta, const std::vector<double>& g, double lr) {
    if (m.empty()) m.assign(theta.size(), 0.0), v.assign(theta.size(), 0.0);
    ++step;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, static_cast<double>(step)));
      const double vhat = v[i] / (1.0 - std::pow(0.999, static_cast<double>(step)));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    }
  }
};

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dmasum_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
