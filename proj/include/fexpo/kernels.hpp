#pragma once

// Dense row-batch kernels. Every kernel has a serial reference and an OpenMP
// variant; both evaluate each output element with the same operation order,
// so the results are bitwise identical.

#include "fexpo/execution.hpp"
#include "fexpo/matrix.hpp"

namespace fexpo::kernels {

// out(p, 0) = 0, out(p, i + 1) = sum_{j <= i} lower(i, j) * in(p, j).
// `lower_t` holds the transpose of the n x n lower-triangular factor.
// in: rows x n, out: rows x (n + 1).
void lower_triangular_map(const Matrix& lower_t, const Matrix& in, Matrix& out, Execution exec);

// out(p, j) = sum_{m >= j} gather(m, j) * in(p, m), gather lower-triangular.
// in and out: rows x (n + 1).
void gather_map(const Matrix& gather, const Matrix& in, Matrix& out, Execution exec);

// out(p, 0) = 0, out(p, i) = out(p, i - 1) + in(p, i - 1).
void cumulative_rows(const Matrix& in, Matrix& out, Execution exec);

// out(p, m) = exp(a t_m + sigma x(p, m)) with t_m = m * step.
void exponential_rows(const Matrix& x, double a, double sigma, double step, Matrix& out, Execution exec);

}  // namespace fexpo::kernels
