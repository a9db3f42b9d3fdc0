#include "fexpo/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace fexpo::kernels {
namespace {

// Rows are processed in tiles so that each column of the factor is loaded
// once per tile. Summation order per output element is still j = 0, 1, ...
constexpr std::size_t kTile = 8;

void lower_tile(const Matrix& lt, const Matrix& in, Matrix& out, std::size_t p0, std::size_t rows) {
  const std::size_t n = lt.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.row(p0 + r).data();
    for (std::size_t i = 0; i <= n; ++i) o[i] = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double* col = lt.data().data() + j * n;
    for (std::size_t r = 0; r < rows; ++r) {
      const double z = in(p0 + r, j);
      double* o = out.row(p0 + r).data() + 1;
      for (std::size_t i = j; i < n; ++i) o[i] += col[i] * z;
    }
  }
}

void gather_tile(const Matrix& g, const Matrix& in, Matrix& out, std::size_t p0, std::size_t rows) {
  const std::size_t w = g.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.row(p0 + r).data();
    for (std::size_t j = 0; j < w; ++j) o[j] = 0.0;
  }
  for (std::size_t m = 0; m < w; ++m) {
    const double* row = g.data().data() + m * w;
    for (std::size_t r = 0; r < rows; ++r) {
      const double z = in(p0 + r, m);
      double* o = out.row(p0 + r).data();
      for (std::size_t j = 0; j <= m; ++j) o[j] += row[j] * z;
    }
  }
}

void check_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void lower_triangular_map(const Matrix& lower_t, const Matrix& in, Matrix& out, Execution exec) {
  const std::size_t n = lower_t.rows();
  check_shape(lower_t.cols() == n && in.cols() == n && out.cols() == n + 1 && out.rows() == in.rows(),
              "lower_triangular_map: shape mismatch");
  const std::size_t rows = in.rows();
  const auto tiles = static_cast<std::ptrdiff_t>((rows + kTile - 1) / kTile);
  auto body = [&](std::ptrdiff_t t) {
    const std::size_t p0 = static_cast<std::size_t>(t) * kTile;
    lower_tile(lower_t, in, out, p0, std::min(kTile, rows - p0));
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t t = 0; t < tiles; ++t) body(t);
  } else {
    for (std::ptrdiff_t t = 0; t < tiles; ++t) body(t);
  }
}

void gather_map(const Matrix& gather, const Matrix& in, Matrix& out, Execution exec) {
  const std::size_t w = gather.rows();
  check_shape(gather.cols() == w && in.cols() == w && out.cols() == w && out.rows() == in.rows(),
              "gather_map: shape mismatch");
  const std::size_t rows = in.rows();
  const auto tiles = static_cast<std::ptrdiff_t>((rows + kTile - 1) / kTile);
  auto body = [&](std::ptrdiff_t t) {
    const std::size_t p0 = static_cast<std::size_t>(t) * kTile;
    gather_tile(gather, in, out, p0, std::min(kTile, rows - p0));
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t t = 0; t < tiles; ++t) body(t);
  } else {
    for (std::ptrdiff_t t = 0; t < tiles; ++t) body(t);
  }
}

void cumulative_rows(const Matrix& in, Matrix& out, Execution exec) {
  const std::size_t n = in.cols();
  check_shape(out.cols() == n + 1 && out.rows() == in.rows(), "cumulative_rows: shape mismatch");
  const auto rows = static_cast<std::ptrdiff_t>(in.rows());
  auto body = [&](std::ptrdiff_t p) {
    out(p, 0) = 0.0;
    for (std::size_t i = 0; i < n; ++i) out(p, i + 1) = out(p, i) + in(p, i);
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < rows; ++p) body(p);
  } else {
    for (std::ptrdiff_t p = 0; p < rows; ++p) body(p);
  }
}

void exponential_rows(const Matrix& x, double a, double sigma, double step, Matrix& out, Execution exec) {
  check_shape(out.rows() == x.rows() && out.cols() == x.cols(), "exponential_rows: shape mismatch");
  const std::size_t w = x.cols();
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
  auto body = [&](std::ptrdiff_t p) {
    for (std::size_t m = 0; m < w; ++m)
      out(p, m) = std::exp(a * (static_cast<double>(m) * step) + sigma * x(p, m));
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < rows; ++p) body(p);
  } else {
    for (std::ptrdiff_t p = 0; p < rows; ++p) body(p);
  }
}

}  // namespace fexpo::kernels
