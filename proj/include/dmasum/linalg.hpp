/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <cstddef>
#include <vector>

#include "dmasum/matrix.hpp"

namespace dmasum {

inline constexpr double kDefaultRankTolerance = 1e-6;

// Singular values in descending order, computed with one-sided Jacobi
// rotations. Throws NumericError if the sweeps do not converge.
std::vector<double> singular_values(const Matrix& m, int max_sweeps = 80);

// Number of singular values strictly greater than rel_tol * sigma_max.
// A zero matrix has rank 0.
std::size_t numerical_rank(const Matrix& m, double rel_tol = kDefaultRankTolerance);

}  // namespace dmasum
