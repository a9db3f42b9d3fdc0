#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fexpo/error.hpp"
#include "fexpo/fbm.hpp"
#include "fexpo/functional.hpp"

using namespace fexpo;

namespace {

// Reference integrals of kernel expressions, computed with a plain tanh-sinh
// rule on the raw kernel (no substitution, no panel splitting).
double reference_integral(const std::function<double(double)>& f, double a, double b) {
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(f, a, b, 1e-12);
}

std::vector<double> zero_path(const TimeGrid& g) { return std::vector<double>(g.size(), 0.0); }

}  // namespace

TEST_CASE("model parameters") {
  CHECK_NOTHROW(ModelParams{0.0, 0.0, 1.0}.validate());
  CHECK_THROWS_AS((ModelParams{0.0, 0.0, 1.0}.validate_for_derivatives()), DomainError);
  CHECK_THROWS_AS((ModelParams{0.0, 1.0, 0.0}.validate()), DomainError);
  CHECK_THROWS_AS((ModelParams{NAN, 1.0, 1.0}.validate()), DomainError);
  CHECK_THROWS_AS((ModelParams{0.0, INFINITY, 1.0}.validate()), DomainError);
}

TEST_CASE("trapezoid weights") {
  const TimeGrid g(3.0, 6);
  const auto w = trapezoid_weights(g);
  REQUIRE(w.size() == 7);
  CHECK(w.front() == 0.25);
  CHECK(w[3] == 0.5);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("exponential functional on deterministic inputs") {
  const TimeGrid g2(2.0, 16);
  CHECK(exp_functional(zero_path(g2), {0.0, 0.0, 2.0}, g2) == 2.0);

  // Trapezoid error for e^s on [0, 1] is (e - 1) dt^2 / 12 to leading order.
  for (std::size_t n : {16u, 64u, 256u}) {
    const TimeGrid g(1.0, n);
    const double dt = g.step();
    const double err = exp_functional(zero_path(g), {1.0, 0.0, 1.0}, g) - (std::numbers::e - 1.0);
    CHECK(err == doctest::Approx((std::numbers::e - 1.0) * dt * dt / 12.0).epsilon(0.01));
  }

  const TimeGrid g(1.0, 4);
  std::vector<double> path{0.0, 0.5, -0.5, 1.0, 0.25};
  const auto ev = exponential_values(path, {0.2, -1.0, 1.0}, g);
  CHECK(ev[3] == doctest::Approx(std::exp(0.2 * 0.75 - 1.0)));
  CHECK(exp_functional(path, {0.2, -1.0, 1.0}, g) > 0.0);

  path[2] = 800.0;
  CHECK_THROWS_AS(exp_functional(path, {0.0, 1.0, 1.0}, g), RangeError);
  CHECK_THROWS_AS(exp_functional(std::vector<double>(4, 0.0), {0.0, 1.0, 1.0}, g), MismatchError);
}

TEST_CASE("moment oracles against frozen references") {
  // Frozen from scipy quad/dblquad at 1e-13 relative tolerance.
  CHECK(mean_oracle({0.0, 1.0, 1.0}, HurstIndex(0.3)) == doctest::Approx(1.377594726921868).epsilon(1e-11));
  CHECK(mean_oracle({0.0, 1.0, 1.0}, HurstIndex(0.5)) == doctest::Approx(1.2974425414002562).epsilon(1e-11));
  CHECK(mean_oracle({0.0, 1.0, 1.0}, HurstIndex(0.7)) == doctest::Approx(1.2456640637639047).epsilon(1e-11));
  CHECK(mean_oracle({0.5, 2.0, 1.5}, HurstIndex(0.7)) == doctest::Approx(20.422653676121044).epsilon(1e-11));
  CHECK(second_moment_oracle({0.0, 1.0, 1.0}, HurstIndex(0.3)) == doctest::Approx(2.9539589119954086).epsilon(1e-9));
  CHECK(second_moment_oracle({0.0, 1.0, 1.0}, HurstIndex(0.5)) == doctest::Approx(2.529447344086759).epsilon(1e-9));
  CHECK(second_moment_oracle({0.0, 1.0, 1.0}, HurstIndex(0.7)) == doctest::Approx(2.2504937874492583).epsilon(1e-9));
  CHECK(second_moment_oracle({-0.4, 0.8, 2.0}, HurstIndex(0.3)) == doctest::Approx(4.83255832563624).epsilon(1e-9));
  // E e^{sqrt(2) W_s} = e^s.
  CHECK(mean_oracle({0.0, std::sqrt(2.0), 1.0}, HurstIndex(0.5)) ==
        doctest::Approx(std::numbers::e - 1.0).epsilon(1e-12));
  // Deterministic case: the second moment is the square of the mean.
  const double m = mean_oracle({0.7, 0.0, 1.0}, HurstIndex(0.2));
  CHECK(second_moment_oracle({0.7, 0.0, 1.0}, HurstIndex(0.2)) == doctest::Approx(m * m).epsilon(1e-10));
}

TEST_CASE("boundary ratio") {
  const TimeGrid g(1.0, 32);
  CHECK(boundary_ratio(KernelEvaluator{HurstIndex(0.5)}, g) == 1.0);
  // D_r F blows up at r = 0 on both sides of H = 1/2.
  for (double h : {0.1, 0.3, 0.7, 0.9}) CHECK(boundary_ratio(KernelEvaluator{HurstIndex(h)}, g) > 1.0);
}

TEST_CASE("first derivative on the zero path matches kernel integrals") {
  const TimeGrid g(1.0, 32);
  for (double h : {0.2, 0.7}) {
    CAPTURE(h);
    const KernelEvaluator ev{HurstIndex(h)};
    const DerivativeOperator op(ev, g);
    const auto df = op.apply(zero_path(g), {0.0, 1.5, 1.0});
    for (std::size_t j : {1u, 5u, 16u, 31u}) {
      const double r = g.node(j);
      const double ref = 1.5 * reference_integral([&](double s) { return ev(s, r); }, r, 1.0);
      CAPTURE(j);
      CHECK(df[j] == doctest::Approx(ref).epsilon(1e-8));
    }
    CHECK(df[32] == 0.0);
  }
}

TEST_CASE("first derivative with a smooth path converges at second order") {
  // B_s = s, so the integrand e^{(a + sigma) s} is smooth and the node
  // interpolation error is O(dt^2).
  const KernelEvaluator ev{HurstIndex(0.65)};
  const double r = 0.25;
  const double ref = 0.8 * reference_integral([&](double s) { return ev(s, r) * std::exp(1.1 * s); }, r, 1.0);
  double prev_err = 0.0;
  for (std::size_t n : {16u, 32u, 64u}) {
    const TimeGrid g(1.0, n);
    const auto nodes = g.nodes();
    const auto df = malliavin_derivative(nodes, {0.3, 0.8, 1.0}, ev, g);
    const double err = std::abs(df[n / 4] - ref);
    if (prev_err > 0.0) CHECK(err < 0.35 * prev_err);
    prev_err = err;
  }
  CHECK(prev_err < 1e-3 * ref);
}

TEST_CASE("Brownian derivative is the tail trapezoid") {
  const TimeGrid g(2.0, 20);
  const auto batch = cholesky_paths(HurstIndex(0.5), g, 3, {4, 1});
  const ModelParams params{-0.3, 0.9, 2.0};
  const DerivativeOperator op(KernelEvaluator{HurstIndex(0.5), 2.0}, g);
  for (std::size_t p = 0; p < 3; ++p) {
    const auto path = batch.values.row(p);
    const auto e = exponential_values(path, params, g);
    const auto df = op.apply(path, params);
    for (std::size_t j = 0; j <= 20; ++j) {
      double tail = 0.0;
      for (std::size_t k = j + 1; k <= 20; ++k) tail += 0.5 * g.step() * (e[k - 1] + e[k]);
      CHECK(df[j] == doctest::Approx(0.9 * tail).epsilon(1e-13).scale(1e-300));
    }
  }
}

TEST_CASE("derivative sign and batch application") {
  const TimeGrid g(1.0, 24);
  const auto batch = circulant_paths(HurstIndex(0.35), g, 40, {8, 2});
  const KernelEvaluator ev{HurstIndex(0.35)};
  const DerivativeOperator op(ev, g, Execution::serial);
  const DerivativeOperator op_par(ev, g, Execution::parallel);
  CHECK(op.gather() == op_par.gather());
  for (double sigma : {1.2, -0.7}) {
    const ModelParams params{0.4, sigma, 1.0};
    Matrix rows;
    op.apply_rows(batch.values, params, rows);
    Matrix rows_par;
    op.apply_rows(batch.values, params, rows_par, Execution::parallel);
    CHECK(rows == rows_par);
    for (std::size_t p = 0; p < 40; ++p) {
      const auto df = op.apply(batch.values.row(p), params);
      for (std::size_t j = 0; j <= 24; ++j) {
        CHECK(rows(p, j) == doctest::Approx(df[j]).epsilon(1e-14).scale(1e-300));
        if (j < 24) CHECK((sigma > 0 ? df[j] > 0.0 : df[j] < 0.0));
      }
      CHECK(derivative_energy(df, g) > 0.0);
    }
  }
  Matrix sink;
  CHECK_THROWS_AS(op.apply_rows(Matrix(2, 10), {0.0, 1.0, 1.0}, sink), MismatchError);
}

TEST_CASE("zero-path energy approaches the covariance mass") {
  // With a = 0 and B = 0, D_r F = sigma int_r^T K(s, r) ds and the energy is
  // sigma^2 T^{2H+2} / (2H + 2).
  for (double h : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    CAPTURE(h);
    const TimeGrid g(1.0, 128);
    const KernelEvaluator ev{HurstIndex(h)};
    const auto df = malliavin_derivative(zero_path(g), {0.0, 2.0, 1.0}, ev, g);
    CHECK(derivative_energy(df, g) == doctest::Approx(4.0 / (2 * h + 2)).epsilon(0.01));
  }
}

TEST_CASE("second derivative") {
  const TimeGrid g(1.0, 16);
  SUBCASE("Brownian zero path") {
    const Matrix d2 = second_derivative(zero_path(g), {0.0, 1.5, 1.0}, KernelEvaluator{HurstIndex(0.5)}, g);
    for (std::size_t i = 0; i <= 16; ++i)
      for (std::size_t j = 0; j <= 16; ++j)
        CHECK(d2(i, j) == doctest::Approx(2.25 * (1.0 - g.node(std::max(i, j)))).epsilon(1e-13).scale(1e-300));
  }
  SUBCASE("fractional zero path") {
    const KernelEvaluator ev{HurstIndex(0.7)};
    const Matrix d2 = second_derivative(zero_path(g), {0.0, 1.0, 1.0}, ev, g);
    for (auto [i, j] : {std::pair{3u, 3u}, std::pair{2u, 9u}, std::pair{8u, 8u}}) {
      const double r = g.node(i), q = g.node(j);
      const double lo = std::max(r, q);
      const double ref = reference_integral([&](double s) { return ev(s, r) * ev(s, q); }, lo, 1.0);
      CAPTURE(i);
      CAPTURE(j);
      CHECK(d2(i, j) == doctest::Approx(ref).epsilon(1e-7));
      CHECK(d2(j, i) == d2(i, j));
    }
  }
  SUBCASE("operator is symmetric on random paths") {
    const auto batch = circulant_paths(HurstIndex(0.3), g, 3, {2, 2});
    const SecondDerivativeOperator op(KernelEvaluator{HurstIndex(0.3)}, g);
    for (std::size_t p = 0; p < 3; ++p) {
      const Matrix d2 = op.apply(batch.values.row(p), {0.5, 1.0, 1.0});
      for (std::size_t i = 0; i <= 16; ++i)
        for (std::size_t j = 0; j <= 16; ++j) CHECK(d2(i, j) == d2(j, i));
      CHECK(second_derivative_energy(d2, g) > 0.0);
    }
  }
  CHECK_THROWS_AS(SecondDerivativeOperator(KernelEvaluator{HurstIndex(0.3)}, TimeGrid(1.0, 512)),
                  std::invalid_argument);
}

TEST_CASE("pathwise bounds") {
  const TimeGrid g(1.0, 4);
  const std::vector<double> path{0.0, -0.5, 0.2, -0.1, 0.3};
  const ModelParams params{0.5, 2.0, 1.0};
  const double lb = std::pow(1.0, 2 * 0.3 + 2) / (2 * 0.3 + 2) * 4.0 * std::exp(-1.0 + 2.0 * 2.0 * -0.5);
  CHECK(energy_lower_bound(path, params, HurstIndex(0.3)) == doctest::Approx(lb).epsilon(1e-14));

  // T sigma^4 int s^{4H} e^{2as + 2 sigma B_s} ds with the trapezoid rule.
  double trap = 0.0;
  for (std::size_t i = 0; i <= 4; ++i) {
    const double s = g.node(i);
    const double w = (i == 0 || i == 4) ? 0.125 : 0.25;
    trap += w * std::pow(s, 4 * 0.6) * std::exp(2 * 0.5 * s + 2 * 2.0 * path[i]);
  }
  CHECK(second_derivative_bound(path, params, HurstIndex(0.6), g) == doctest::Approx(16.0 * trap).epsilon(1e-14));
}

TEST_CASE("pathwise inequalities hold on simulated paths") {
  const TimeGrid g(1.0, 32);
  const ModelParams params{0.5, 1.0, 1.0};
  for (double h : {0.3, 0.7}) {
    CAPTURE(h);
    const HurstIndex H(h);
    const KernelEvaluator ev{H};
    const DerivativeOperator d1(ev, g);
    const SecondDerivativeOperator d2(ev, g);
    const auto batch = circulant_paths(H, g, 200, {11, 2});
    for (std::size_t p = 0; p < 200; ++p) {
      const auto path = batch.values.row(p);
      CHECK(derivative_energy(d1.apply(path, params), g) >= energy_lower_bound(path, params, H));
      CHECK(second_derivative_energy(d2.apply(path, params), g) <= second_derivative_bound(path, params, H, g));
    }
  }
}

TEST_CASE("functional CSV export") {
  const TimeGrid g(1.0, 8);
  std::vector<FunctionalSample> samples(2);
  samples[1].path_id = 1;
  samples[1].F = 1.25;
  const auto file = std::filesystem::temp_directory_path() / "fexpo_test_functional.csv";
  write_functional_csv(file, samples, HurstIndex(0.3), {0.0, 1.0, 1.0}, g, 42);
  std::ifstream in(file);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "path_id,H,a,sigma,T,n,F,energy,lower_bound,second_deriv_bound,seed");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
  std::filesystem::remove(file);
}
