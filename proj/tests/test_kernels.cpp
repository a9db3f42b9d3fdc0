#include <cmath>
#include <random>

#include "doctest.h"
#include "fexpo/kernels.hpp"

using namespace fexpo;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Matrix m(rows, cols);
  for (double& v : m.data()) v = z(rng);
  return m;
}

Matrix lower_part(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j <= i && j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

}  // namespace

// Sizes straddle the row tile so partial tiles are exercised.
TEST_CASE("lower_triangular_map") {
  for (std::size_t n : {1u, 7u, 8u, 9u, 33u}) {
    for (std::size_t rows : {1u, 5u, 17u}) {
      CAPTURE(n);
      CAPTURE(rows);
      const Matrix lower = lower_part(random_matrix(n, n, 11 + n));
      Matrix lower_t(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) lower_t(j, i) = lower(i, j);
      const Matrix in = random_matrix(rows, n, 3 + rows);
      Matrix serial(rows, n + 1), parallel(rows, n + 1, 99.0);
      kernels::lower_triangular_map(lower_t, in, serial, Execution::serial);
      kernels::lower_triangular_map(lower_t, in, parallel, Execution::parallel);
      CHECK(serial == parallel);
      for (std::size_t p = 0; p < rows; ++p) {
        CHECK(serial(p, 0) == 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          double ref = 0.0;
          for (std::size_t j = 0; j <= i; ++j) ref += lower(i, j) * in(p, j);
          CHECK(serial(p, i + 1) == doctest::Approx(ref).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("gather_map") {
  for (std::size_t nodes : {2u, 8u, 9u, 30u}) {
    for (std::size_t rows : {1u, 9u, 20u}) {
      CAPTURE(nodes);
      CAPTURE(rows);
      const Matrix gather = lower_part(random_matrix(nodes, nodes, 5 + nodes));
      const Matrix in = random_matrix(rows, nodes, 17 + rows);
      Matrix serial(rows, nodes), parallel(rows, nodes, -1.0);
      kernels::gather_map(gather, in, serial, Execution::serial);
      kernels::gather_map(gather, in, parallel, Execution::parallel);
      CHECK(serial == parallel);
      for (std::size_t p = 0; p < rows; ++p)
        for (std::size_t j = 0; j < nodes; ++j) {
          double ref = 0.0;
          for (std::size_t m = j; m < nodes; ++m) ref += gather(m, j) * in(p, m);
          CHECK(serial(p, j) == doctest::Approx(ref).epsilon(1e-12));
        }
    }
  }
}

TEST_CASE("cumulative_rows") {
  const Matrix in = random_matrix(13, 10, 1);
  Matrix serial(13, 11), parallel(13, 11);
  kernels::cumulative_rows(in, serial, Execution::serial);
  kernels::cumulative_rows(in, parallel, Execution::parallel);
  CHECK(serial == parallel);
  for (std::size_t p = 0; p < 13; ++p) {
    double acc = 0.0;
    CHECK(serial(p, 0) == 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
      acc += in(p, i);
      CHECK(serial(p, i + 1) == acc);
    }
  }
}

TEST_CASE("exponential_rows") {
  const Matrix x = random_matrix(6, 12, 2);
  Matrix serial(6, 12), parallel(6, 12);
  kernels::exponential_rows(x, 0.3, -1.5, 0.1, serial, Execution::serial);
  kernels::exponential_rows(x, 0.3, -1.5, 0.1, parallel, Execution::parallel);
  CHECK(serial == parallel);
  for (std::size_t p = 0; p < 6; ++p)
    for (std::size_t m = 0; m < 12; ++m)
      CHECK(serial(p, m) == doctest::Approx(std::exp(0.3 * 0.1 * m - 1.5 * x(p, m))).epsilon(1e-14));
}
