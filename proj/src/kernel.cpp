#include "fexpo/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "fexpo/error.hpp"
#include "fexpo/quadrature.hpp"

namespace fexpo {

HurstIndex::HurstIndex(double value) : value_(value) {
  if (!(value > 0.0 && value < 1.0)) {
    throw DomainError("Hurst index must lie in (0, 1), got " + std::to_string(value));
  }
}

bool HurstIndex::is_brownian() const noexcept { return std::abs(value_ - 0.5) < kBrownianBand; }

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw DomainError("time horizon must be positive and finite, got " + std::to_string(horizon));
  }
  if (steps < 2) throw DomainError("time grid needs at least 2 steps, got " + std::to_string(steps));
}

std::vector<double> TimeGrid::nodes() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = node(i);
  return out;
}

namespace {

// Both branches work in y = u / s, so the inner integrals depend only on the
// relative gap rho = (t - s) / s and never form s^{a-1} directly.

// int_1^{1+rho} (y - 1)^{a-1} y^a dy for a = H - 1/2 in (0, 1/2).
double smooth_branch_integral(double a, double rho, double tol) {
  // w = (y - 1)^a removes the (y - 1)^{a-1} endpoint singularity.
  const double inv_a = 1.0 / a;
  double total = inv_a * quad::adaptive(
                             [&](double w) { return std::pow(1.0 + std::pow(w, inv_a), a); }, 0.0,
                             std::pow(std::min(rho, 1.0), a), tol, "volterra kernel (H > 1/2, near part)");
  if (rho > 1.0) {
    // y = e^v on [2, 1 + rho], where the integrand varies over many decades;
    // written through (y - 1) / y = -expm1(-v) to stay finite for huge rho.
    total += quad::adaptive(
        [&](double v) { return std::pow(-std::expm1(-v), a - 1.0) * std::exp(2.0 * a * v); },
        std::log(2.0), std::log1p(rho), tol, "volterra kernel (H > 1/2, far part)");
  }
  return total;
}

// int_1^{1+rho} y^{a-1} (y - 1)^a dy for a = H - 1/2 in (-1/2, 0).
double rough_branch_integral(double a, double rho, double tol) {
  // w = (y - 1)^{a+1} removes the (y - 1)^a endpoint singularity; the
  // remaining w^{1/(a+1)} kink at w = 0 is smoothed by a further w = x^3.
  const double b = a + 1.0;
  const double p = 3.0 / b;
  double total = (3.0 / b) * quad::adaptive(
                                 [&](double x) { return x * x * std::pow(1.0 + std::pow(x, p), a - 1.0); },
                                 0.0, std::pow(std::min(rho, 1.0), b / 3.0), tol,
                                 "volterra kernel (H < 1/2, near part)");
  if (rho > 1.0) {
    total += quad::adaptive(
        [&](double v) { return std::pow(-std::expm1(-v), a) * std::exp(2.0 * a * v); },
        std::log(2.0), std::log1p(rho), tol, "volterra kernel (H < 1/2, far part)");
  }
  return total;
}

}  // namespace

double KernelEvaluator::unit_kernel(HurstIndex hurst, double t, double s, double gap, double inner_tol) {
  if (hurst.is_brownian()) return 1.0;
  const double a = hurst.value() - 0.5;
  const double rho = gap / s;
  if (a > 0.0) {
    // s^{-a} * int_s^t (u - s)^{a-1} u^a du = s^a * (scaled integral)
    return std::pow(s, a) * smooth_branch_integral(a, rho, inner_tol);
  }
  return std::pow(t / s, a) * std::pow(gap, a) - a * std::pow(s, a) * rough_branch_integral(a, rho, inner_tol);
}

double KernelEvaluator::inner_tol() const noexcept { return std::max(1e-13, quad_tol_ * 1e-2); }

KernelEvaluator::KernelEvaluator(HurstIndex hurst, double constant, double horizon, double quad_tol, int)
    : hurst_(hurst), constant_(constant), horizon_(horizon), quad_tol_(quad_tol) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw DomainError("kernel horizon must be positive and finite");
  }
  if (!(quad_tol > 0.0 && quad_tol < 1e-2)) {
    throw DomainError("quadrature tolerance must lie in (0, 1e-2), got " + std::to_string(quad_tol));
  }
  if (!(constant > 0.0) || !std::isfinite(constant)) {
    throw DomainError("normalizing constant must be positive, got " + std::to_string(constant));
  }
}

KernelEvaluator::KernelEvaluator(HurstIndex hurst, double horizon, double quad_tol)
    : KernelEvaluator(hurst, 1.0, horizon, quad_tol, 0) {
  constant_ = calibrate_normalizing_constant(hurst, quad_tol);
}

KernelEvaluator KernelEvaluator::with_constant(HurstIndex hurst, double constant, double horizon,
                                               double quad_tol) {
  return KernelEvaluator(hurst, constant, horizon, quad_tol, 0);
}

double KernelEvaluator::operator()(double t, double s) const {
  if (!(s > 0.0) || !(s < t) || !(t <= horizon_)) {
    throw DomainError("volterra kernel requires 0 < s < t <= T; got t=" + std::to_string(t) +
                      ", s=" + std::to_string(s) + ", T=" + std::to_string(horizon_));
  }
  const double value = value_with_gap(t, s, t - s);
  if (!std::isfinite(value)) throw QuadratureError("volterra kernel evaluated to a non-finite value");
  return value;
}

double volterra_kernel(const KernelEvaluator& ev, double t, double s) { return ev(t, s); }

double calibrate_normalizing_constant(HurstIndex hurst, double quad_tol) {
  if (hurst.is_brownian()) return 1.0;
  const double inner = std::max(1e-14, quad_tol * 1e-3);
  const double energy = quad::endpoint_singular(
      [&](double s, double, double gap) {
        const double k = KernelEvaluator::unit_kernel(hurst, 1.0, s, gap, inner);
        return k * k;
      },
      0.0, 1.0, std::max(1e-14, quad_tol * 1e-2), "normalizing constant calibration");
  if (!(energy > 0.0)) throw QuadratureError("kernel energy is not positive during calibration");
  return 1.0 / std::sqrt(energy);
}

double fbm_covariance(HurstIndex hurst, double s, double t) {
  if (!(s >= 0.0) || !(t >= 0.0) || !std::isfinite(s) || !std::isfinite(t)) {
    throw DomainError("fbm covariance requires s, t >= 0");
  }
  const double h2 = 2.0 * hurst.value();
  return 0.5 * (std::pow(t, h2) + std::pow(s, h2) - std::pow(std::abs(t - s), h2));
}

double kernel_l2_norm(const KernelEvaluator& ev, double s) {
  if (!(s > 0.0) || !(s <= ev.horizon())) throw DomainError("kernel_l2_norm requires 0 < s <= T");
  if (ev.hurst().is_brownian()) {
    const double c = ev.normalizing_constant();
    return c * c * s;
  }
  return quad::endpoint_singular(
      [&](double r, double, double gap) {
        const double k = ev.value_with_gap(s, r, gap);
        return k * k;
      },
      0.0, s, ev.quad_tol(), "kernel_l2_norm");
}

double kernel_cross_integral(const KernelEvaluator& ev, double s, double t) {
  if (!(s > 0.0) || !(t > 0.0) || !(s <= ev.horizon()) || !(t <= ev.horizon())) {
    throw DomainError("kernel_cross_integral requires 0 < s, t <= T");
  }
  const double lo = std::min(s, t);
  const double hi = std::max(s, t);
  if (ev.hurst().is_brownian()) {
    const double c = ev.normalizing_constant();
    return c * c * lo;
  }
  const double offset = hi - lo;
  return quad::endpoint_singular(
      [&](double r, double, double gap) {
        return ev.value_with_gap(lo, r, gap) * ev.value_with_gap(hi, r, gap + offset);
      },
      0.0, lo, ev.quad_tol(), "kernel_cross_integral");
}

double covariance_mass(HurstIndex hurst, double horizon) {
  const double p = 2.0 * hurst.value() + 2.0;
  return std::pow(horizon, p) / p;
}

double double_covariance_integral(HurstIndex hurst, double horizon, double rel_tol) {
  if (!(horizon > 0.0)) throw DomainError("double_covariance_integral requires T > 0");
  const double h2 = 2.0 * hurst.value();
  // Symmetric in (s, t): twice the integral over t < s, with s - t kept exact.
  const double half = quad::endpoint_singular(
      [&](double s, double, double) {
        const double ss = std::pow(s, h2);
        return quad::endpoint_singular_with(
            quad::tanh_sinh_inner_engine(),
            [&](double t, double, double gap) {
              return 0.5 * (ss + std::pow(t, h2) - std::pow(gap, h2));
            },
            0.0, s, rel_tol, "double covariance integral (inner)");
      },
      0.0, horizon, rel_tol, "double covariance integral (outer)");
  return 2.0 * half;
}

double kernel_column_energy(const KernelEvaluator& ev, double horizon) {
  if (!(horizon > 0.0) || horizon > ev.horizon()) throw DomainError("kernel_column_energy requires 0 < T <= horizon");
  if (ev.hurst().is_brownian()) {
    const double c = ev.normalizing_constant();
    return c * c * horizon * horizon * horizon / 3.0;
  }
  return quad::endpoint_singular(
      [&](double r, double, double) {
        const double column = quad::endpoint_singular_with(
            quad::tanh_sinh_inner_engine(),
            [&](double s, double gap, double) { return ev.value_with_gap(s, r, gap); }, r, horizon,
            ev.quad_tol(), "kernel column integral");
        return column * column;
      },
      0.0, horizon, ev.quad_tol(), "kernel column energy");
}

double WeightMatrix::row_energy(std::size_t node) const {
  if (node == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < node; ++j) sum += weights(node - 1, j) * weights(node - 1, j);
  return sum;
}

namespace {

void fill_weight_row(const KernelEvaluator& ev, const TimeGrid& grid, std::size_t i, Matrix& w) {
  const double t = grid.node(i);
  const auto& gl = quad::GaussLegendre10::get();
  for (std::size_t j = 1; j <= i; ++j) {
    const double lo = grid.node(j - 1);
    const double hi = grid.node(j);
    const double tail = grid.node(i) - hi;  // distance from panel end to t
    double energy = 0.0;
    double sign = 1.0;
    if (j == 1 || j == i) {
      energy = quad::endpoint_singular(
          [&](double s, double, double right) {
            const double k = ev.value_with_gap(t, s, right + tail);
            return k * k;
          },
          lo, hi, ev.quad_tol(), "kernel weight panel");
      const double mid = 0.5 * (lo + hi);
      sign = ev.value_with_gap(t, mid, t - mid) < 0.0 ? -1.0 : 1.0;
    } else {
      const double half = 0.5 * (hi - lo);
      const double centre = 0.5 * (hi + lo);
      double first_moment = 0.0;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double s = centre + half * gl.nodes[q];
        const double k = ev.value_with_gap(t, s, t - s);
        energy += gl.weights[q] * k * k;
        first_moment += gl.weights[q] * k;
      }
      energy *= half;
      sign = first_moment < 0.0 ? -1.0 : 1.0;
    }
    if (!std::isfinite(energy) || energy < 0.0) {
      throw QuadratureError("kernel weight panel (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") has invalid energy");
    }
    w(i - 1, j - 1) = sign * std::sqrt(energy);
  }
}

}  // namespace

WeightMatrix integrated_kernel_weights(const KernelEvaluator& ev, const TimeGrid& grid, Execution exec) {
  if (grid.horizon() > ev.horizon() * (1.0 + 1e-12)) {
    throw DomainError("grid horizon exceeds the kernel evaluator's horizon");
  }
  const std::size_t n = grid.steps();
  WeightMatrix out{ev.hurst(), grid, Matrix(n, n)};
  if (ev.hurst().is_brownian()) {
    const double root = ev.normalizing_constant() * std::sqrt(grid.step());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) out.weights(i, j) = root;
    return out;
  }
  if (exec == Execution::serial) {
    for (std::size_t i = 1; i <= n; ++i) fill_weight_row(ev, grid, i, out.weights);
    return out;
  }
  // Exceptions cannot cross the parallel region; capture the first one.
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t r = static_cast<std::ptrdiff_t>(n); r >= 1; --r) {
    try {
      fill_weight_row(ev, grid, static_cast<std::size_t>(r), out.weights);
    } catch (const std::exception& e) {
#pragma omp critical(fexpo_weight_failure)
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw QuadratureError(failure);
  return out;
}

void write_weights_binary(const std::filesystem::path& file, const WeightMatrix& w) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FormatError("cannot open " + file.string() + " for writing");
  const auto n = static_cast<std::uint32_t>(w.grid.steps());
  out.write("FKW1", 4);
  detail::put_le<std::uint32_t>(out, n);
  detail::put_le<std::uint32_t>(out, 0);
  detail::put_le<std::uint32_t>(out, 0);
  for (double v : w.weights.data()) detail::put_f64(out, v);
  if (!out) throw FormatError("write failed for " + file.string());
}

WeightMatrix read_weights_binary(const std::filesystem::path& file, HurstIndex hurst, double horizon) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open " + file.string());
  detail::expect_magic(in, "FKW1");
  const auto n = detail::get_le<std::uint32_t>(in, "FKW1 header");
  detail::get_le<std::uint32_t>(in, "FKW1 header");
  detail::get_le<std::uint32_t>(in, "FKW1 header");
  WeightMatrix w{hurst, TimeGrid(horizon, n), Matrix(n, n)};
  for (double& v : w.weights.data()) v = detail::get_f64(in, "FKW1 payload");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (w.weights(i, j) != 0.0) throw FormatError("FKW1 payload is not lower triangular");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after FKW1 payload");
  return w;
}

void write_weights_csv(const std::filesystem::path& file, const WeightMatrix& w) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot open " + file.string() + " for writing");
  out.precision(17);
  for (std::size_t i = 0; i < w.weights.rows(); ++i) {
    for (std::size_t j = 0; j < w.weights.cols(); ++j) {
      if (j) out << ',';
      out << w.weights(i, j);
    }
    out << '\n';
  }
}

}  // namespace fexpo
