/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "dmasum/errors.hpp"

namespace dmasum {

std::vector<double> singular_values(const Matrix& m, int max_sweeps) {
  require_finite(m, "singular_values");
  // Work on the orientation with at least as many rows as columns; columns of
  // `work` are orthogonalised pairwise until every pair is numerically
  // orthogonal, after which the column norms are the singular values.
  Matrix work = m.rows() >= m.cols() ? m : transpose(m);
  const std::size_t rows = work.rows();
  const std::size_t cols = work.cols();
  if (cols == 0) return {};

  // Column-major copy makes the rotations contiguous.
  std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) col[j][i] = work(i, j);

  const double eps = std::numeric_limits<double>::epsilon();
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += col[p][i] * col[p][i];
          beta += col[q][i] * col[q][i];
          gamma += col[p][i] * col[q][i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double xp = col[p][i];
          const double xq = col[q][i];
          col[p][i] = c * xp - s * xq;
          col[q][i] = s * xp + c * xq;
        }
      }
    }
  }
  if (!converged) throw NumericError("singular_values: Jacobi sweeps did not converge");

  std::vector<double> sigma(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (double v : col[j]) s += v * v;
    sigma[j] = std::sqrt(s);
  }
  std::sort(sigma.begin(), sigma.end(), std::greater<>());
  return sigma;
}

std::size_t numerical_rank(const Matrix& m, double rel_tol) {
  if (!(rel_tol > 0.0)) throw InputError("numerical_rank: rel_tol must be positive");
  const auto sigma = singular_values(m);
  if (sigma.empty() || sigma.front() == 0.0) return 0;
  const double cutoff = rel_tol * sigma.front();
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [cutoff](double s) { return s > cutoff; }));
}

}  // namespace dmasum
