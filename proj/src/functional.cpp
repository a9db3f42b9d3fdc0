#include "fexpo/functional.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "fexpo/error.hpp"
#include "fexpo/kernels.hpp"
#include "fexpo/quadrature.hpp"

namespace fexpo {
namespace {

void check_path(std::span<const double> path, const TimeGrid& grid) {
  if (path.size() != grid.size())
    throw MismatchError("path has " + std::to_string(path.size()) + " values but the grid has " +
                        std::to_string(grid.size()) + " nodes");
}

double checked_exponent(double e, std::size_t node) {
  if (!(e <= kMaxExponent))
    throw RangeError("exponent " + std::to_string(e) + " at node " + std::to_string(node) + " exceeds " +
                     std::to_string(kMaxExponent));
  return e;
}

void check_horizon(const KernelEvaluator& ev, const TimeGrid& grid) {
  if (grid.horizon() > ev.horizon() * (1.0 + 1e-12))
    throw DomainError("grid horizon exceeds the kernel evaluator's horizon");
}

// Runs body(j) for j in [first, last), capturing the first failure.
template <class Body>
void for_each_column(std::size_t first, std::size_t last, Execution exec, Body&& body) {
  if (exec == Execution::serial) {
    for (std::size_t j = first; j < last; ++j) body(j);
    return;
  }
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(last) - 1; j >= static_cast<std::ptrdiff_t>(first); --j) {
    try {
      body(static_cast<std::size_t>(j));
    } catch (const std::exception& e) {
#pragma omp critical(fexpo_operator_failure)
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw QuadratureError(failure);
}

}  // namespace

void ModelParams::validate() const {
  if (!std::isfinite(a)) throw DomainError("a must be finite");
  if (!std::isfinite(sigma)) throw DomainError("sigma must be finite");
  if (!(std::isfinite(horizon) && horizon > 0.0)) throw DomainError("T must be positive and finite");
}

void ModelParams::validate_for_derivatives() const {
  validate();
  if (sigma == 0.0) throw DomainError("sigma must be nonzero for derivative and energy operations");
}

std::vector<double> trapezoid_weights(const TimeGrid& grid) {
  std::vector<double> w(grid.size(), grid.step());
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

std::vector<double> exponential_values(std::span<const double> path, const ModelParams& params,
                                       const TimeGrid& grid) {
  check_path(path, grid);
  std::vector<double> g(path.size());
  for (std::size_t m = 0; m < path.size(); ++m)
    g[m] = std::exp(checked_exponent(params.a * grid.node(m) + params.sigma * path[m], m));
  return g;
}

double exp_functional(std::span<const double> path, const ModelParams& params, const TimeGrid& grid) {
  params.validate();
  const auto g = exponential_values(path, params, grid);
  const auto w = trapezoid_weights(grid);
  double f = 0.0;
  for (std::size_t m = 0; m < g.size(); ++m) f += w[m] * g[m];
  return f;
}

double boundary_ratio(const KernelEvaluator& ev, const TimeGrid& grid) {
  if (ev.hurst().is_brownian()) return 1.0;
  check_horizon(ev, grid);
  const double t = grid.horizon();
  const double dt = grid.step();
  const double tol = ev.quad_tol();
  auto envelope = [&](double r) {
    return quad::endpoint_singular_with(
        quad::tanh_sinh_inner_engine(), [&](double s, double gap, double) { return ev.value_with_gap(s, r, gap); },
        r, t, tol, "boundary ratio, envelope");
  };
  const double first = quad::endpoint_singular(
      [&](double r, double, double) {
        const double e = envelope(r);
        return e * e;
      },
      0.0, dt, 1e2 * tol, "boundary ratio, first panel");
  const double d1 = envelope(dt);
  const double d0_sq = 2.0 * first / dt - d1 * d1;
  if (!(d0_sq > 0.0)) throw QuadratureError("boundary ratio: first panel is not dominated by the node-0 blow-up");
  return std::sqrt(d0_sq) / d1;
}

// ---------------------------------------------------------------- first derivative

DerivativeOperator::DerivativeOperator(const KernelEvaluator& ev, const TimeGrid& grid, Execution exec)
    : hurst_(ev.hurst()), grid_(grid), gather_(grid.size(), grid.size()) {
  check_horizon(ev, grid);
  const std::size_t n = grid.steps();
  const double dt = grid.step();
  const double half = 0.5 * dt;
  const bool brownian = hurst_.is_brownian();
  const auto& gl = quad::GaussLegendre10::get();
  const double tol = ev.quad_tol();

  // Column j holds the weights of D_{t_j}; columns are independent.
  for_each_column(brownian ? 0 : 1, n, exec, [&](std::size_t j) {
    const double r = grid.node(j);
    for (std::size_t k = j + 1; k <= n; ++k) {
      const double lo = grid.node(k - 1);
      double left = 0.0;
      double right = 0.0;
      if (k == j + 1 && !brownian) {
        const double hi = grid.node(k);
        right = quad::endpoint_singular(
            [&](double s, double gl_, double) { return ev.value_with_gap(s, r, gl_) * (gl_ / dt); }, r, hi, tol,
            "first derivative, singular panel");
        left = quad::endpoint_singular(
            [&](double s, double gl_, double gr_) { return ev.value_with_gap(s, r, gl_) * (gr_ / dt); }, r, hi,
            tol, "first derivative, singular panel");
      } else {
        const double offset = static_cast<double>(k - 1 - j) * dt;
        for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
          const double u = half * (1.0 + gl.nodes[q]);
          const double kv = ev.value_with_gap(lo + u, r, offset + u) * gl.weights[q] * half;
          const double phi = u / dt;
          left += kv * (1.0 - phi);
          right += kv * phi;
        }
      }
      gather_(k - 1, j) += left;
      gather_(k, j) += right;
    }
  });
  if (!brownian) {
    const double rho = boundary_ratio(ev, grid);
    for (std::size_t m = 0; m <= n; ++m) gather_(m, 0) = rho * gather_(m, 1);
  }
}

std::vector<double> DerivativeOperator::apply(std::span<const double> path, const ModelParams& params) const {
  Matrix row(1, path.size());
  std::copy(path.begin(), path.end(), row.row(0).begin());
  Matrix out;
  apply_rows(row, params, out);
  return {out.row(0).begin(), out.row(0).end()};
}

void DerivativeOperator::apply_rows(const Matrix& paths, const ModelParams& params, Matrix& out,
                                    Execution exec) const {
  params.validate_for_derivatives();
  if (paths.cols() != grid_.size()) throw MismatchError("paths do not live on the operator's grid");
  Matrix g(paths.rows(), paths.cols());
  for (std::size_t p = 0; p < paths.rows(); ++p)
    for (std::size_t m = 0; m < paths.cols(); ++m)
      g(p, m) = std::exp(checked_exponent(params.a * grid_.node(m) + params.sigma * paths(p, m), m));
  if (out.rows() != paths.rows() || out.cols() != paths.cols()) out = Matrix(paths.rows(), paths.cols());
  kernels::gather_map(gather_, g, out, exec);
  for (double& v : out.data()) v *= params.sigma;
}

// ---------------------------------------------------------------- second derivative

std::size_t SecondDerivativeOperator::pair_index(std::size_t i, std::size_t j) const noexcept {
  if (i > j) std::swap(i, j);
  return j * (j + 1) / 2 + i;
}

SecondDerivativeOperator::SecondDerivativeOperator(const KernelEvaluator& ev, const TimeGrid& grid, Execution exec)
    : hurst_(ev.hurst()), grid_(grid) {
  check_horizon(ev, grid);
  const std::size_t n = grid.steps();
  if (n > kMaxSteps)
    throw std::invalid_argument("second derivative grid limited to " + std::to_string(kMaxSteps) + " steps, got " +
                                std::to_string(n));
  const std::size_t nodes = grid.size();
  tensor_ = Matrix(nodes * (nodes + 1) / 2, nodes);
  const double dt = grid.step();
  const double half = 0.5 * dt;
  const bool brownian = hurst_.is_brownian();
  const std::size_t first = brownian ? 0 : 1;
  const auto& gl = quad::GaussLegendre10::get();
  const std::size_t nq = gl.nodes.size();
  const double tol = ev.quad_tol();

  // kv[(k * nq + q) * nodes + r] = K(s_{k,q}, t_r) for panel k and r < k.
  std::vector<double> kv(nodes * nq * nodes, 0.0);
  for_each_column(1, n + 1, exec, [&](std::size_t k) {
    const double lo = grid.node(k - 1);
    for (std::size_t q = 0; q < nq; ++q) {
      const double u = half * (1.0 + gl.nodes[q]);
      for (std::size_t r = first; r < k; ++r)
        kv[(k * nq + q) * nodes + r] = ev.value_with_gap(lo + u, grid.node(r), static_cast<double>(k - 1 - r) * dt + u);
    }
  });

  for_each_column(first, n, exec, [&](std::size_t j) {
    const double tj = grid.node(j);
    for (std::size_t i = first; i <= j; ++i) {
      double* w = tensor_.row(pair_index(i, j)).data();
      const double ti = grid.node(i);
      for (std::size_t k = j + 1; k <= n; ++k) {
        double left = 0.0;
        double right = 0.0;
        if (k == j + 1 && !brownian) {
          const double hi = grid.node(k);
          const double lag = static_cast<double>(j - i) * dt;
          auto both = [&](double s, double g) {
            return ev.value_with_gap(s, tj, g) * ev.value_with_gap(s, ti, lag + g);
          };
          right = quad::endpoint_singular([&](double s, double g, double) { return both(s, g) * (g / dt); }, tj, hi,
                                          tol, "second derivative, singular panel");
          left = quad::endpoint_singular([&](double s, double g, double gr) { return both(s, g) * (gr / dt); }, tj,
                                         hi, tol, "second derivative, singular panel");
        } else {
          for (std::size_t q = 0; q < nq; ++q) {
            const double* row = kv.data() + (k * nq + q) * nodes;
            const double u = half * (1.0 + gl.nodes[q]);
            const double v = row[i] * row[j] * gl.weights[q] * half;
            const double phi = u / dt;
            left += v * (1.0 - phi);
            right += v * phi;
          }
        }
        w[k - 1] += left;
        w[k] += right;
      }
    }
  });

  if (!brownian) {
    // Row/column 0 from the boundary ratio, as for the first derivative.
    const double rho = boundary_ratio(ev, grid);
    for (std::size_t j = 1; j <= n; ++j) {
      auto dst = tensor_.row(pair_index(0, j));
      auto src = tensor_.row(pair_index(1, j));
      for (std::size_t m = 0; m < nodes; ++m) dst[m] = rho * src[m];
    }
    auto dst = tensor_.row(pair_index(0, 0));
    auto src = tensor_.row(pair_index(1, 1));
    for (std::size_t m = 0; m < nodes; ++m) dst[m] = rho * rho * src[m];
  }
}

Matrix SecondDerivativeOperator::apply(std::span<const double> path, const ModelParams& params) const {
  params.validate_for_derivatives();
  const auto g = exponential_values(path, params, grid_);
  const std::size_t nodes = grid_.size();
  const double s2 = params.sigma * params.sigma;
  Matrix out(nodes, nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      const double* w = tensor_.row(pair_index(i, j)).data();
      double acc = 0.0;
      for (std::size_t m = j; m < nodes; ++m) acc += w[m] * g[m];
      out(i, j) = out(j, i) = s2 * acc;
    }
  }
  return out;
}

std::vector<double> malliavin_derivative(std::span<const double> path, const ModelParams& params,
                                         const KernelEvaluator& ev, const TimeGrid& grid) {
  params.validate_for_derivatives();
  check_path(path, grid);
  return DerivativeOperator(ev, grid).apply(path, params);
}

Matrix second_derivative(std::span<const double> path, const ModelParams& params, const KernelEvaluator& ev,
                         const TimeGrid& grid) {
  params.validate_for_derivatives();
  check_path(path, grid);
  return SecondDerivativeOperator(ev, grid).apply(path, params);
}

double derivative_energy(std::span<const double> df, const TimeGrid& grid) {
  check_path(df, grid);
  const auto w = trapezoid_weights(grid);
  double e = 0.0;
  for (std::size_t m = 0; m < df.size(); ++m) e += w[m] * df[m] * df[m];
  return e;
}

double second_derivative_energy(const Matrix& d2, const TimeGrid& grid) {
  if (d2.rows() != grid.size() || d2.cols() != grid.size())
    throw MismatchError("second derivative matrix does not match the grid");
  const auto w = trapezoid_weights(grid);
  double e = 0.0;
  for (std::size_t i = 0; i < d2.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d2.cols(); ++j) row += w[j] * d2(i, j) * d2(i, j);
    e += w[i] * row;
  }
  return e;
}

// ---------------------------------------------------------------- bounds

double energy_lower_bound(std::span<const double> path, const ModelParams& params, HurstIndex hurst) {
  params.validate_for_derivatives();
  if (path.empty()) throw std::invalid_argument("energy_lower_bound: empty path");
  double low = params.sigma * path[0];
  for (double b : path) low = std::min(low, params.sigma * b);
  const double t = params.horizon;
  const double h = hurst.value();
  const double exponent = -2.0 * std::abs(params.a) * t + 2.0 * low;
  return std::pow(t, 2.0 * h + 2.0) / (2.0 * h + 2.0) * params.sigma * params.sigma *
         std::exp(checked_exponent(exponent, 0));
}

double second_derivative_bound(std::span<const double> path, const ModelParams& params, HurstIndex hurst,
                               const TimeGrid& grid) {
  params.validate_for_derivatives();
  check_path(path, grid);
  const auto w = trapezoid_weights(grid);
  const double h4 = 4.0 * hurst.value();
  double acc = 0.0;
  for (std::size_t m = 0; m < path.size(); ++m) {
    const double s = grid.node(m);
    const double e = checked_exponent(2.0 * (params.a * s + params.sigma * path[m]), m);
    acc += w[m] * std::pow(s, h4) * std::exp(e);
  }
  const double s2 = params.sigma * params.sigma;
  return params.horizon * s2 * s2 * acc;
}

// ---------------------------------------------------------------- oracles

double mean_oracle(const ModelParams& params, HurstIndex hurst) {
  params.validate();
  const double t = params.horizon;
  if (params.sigma == 0.0) return params.a == 0.0 ? t : std::expm1(params.a * t) / params.a;
  const double h2 = 2.0 * hurst.value();
  const double half_var = 0.5 * params.sigma * params.sigma;
  return quad::endpoint_singular(
      [&](double s, double, double) { return std::exp(params.a * s + half_var * std::pow(s, h2)); }, 0.0, t, 1e-12,
      "mean oracle");
}

double second_moment_oracle(const ModelParams& params, HurstIndex hurst) {
  params.validate();
  if (params.sigma == 0.0) {
    const double m = mean_oracle(params, hurst);
    return m * m;
  }
  const double h2 = 2.0 * hurst.value();
  const double var = params.sigma * params.sigma;
  // Symmetric in (s, t): twice the integral over t < s. The inner integrand has
  // a |s - t|^{2H} cusp at t = s, which sits on an endpoint.
  // Inner variable t = s v keeps the rule scale free as s -> 0.
  auto inner = [&](double s) {
    const double ss = std::pow(s, h2);
    return s * quad::endpoint_singular_with(
                   quad::tanh_sinh_inner_engine(),
                   [&](double v, double, double vc) {
                     const double t = s * v;
                     return std::exp(params.a * (s + t) +
                                     var * (ss + std::pow(t, h2) - 0.5 * std::pow(s * vc, h2)));
                   },
                   0.0, 1.0, 1e-12, "second moment oracle, inner");
  };
  return 2.0 * quad::endpoint_singular([&](double s, double, double) { return inner(s); }, 0.0, params.horizon,
                                       1e-10, "second moment oracle");
}

void write_functional_csv(const std::filesystem::path& file, std::span<const FunctionalSample> samples,
                          HurstIndex hurst, const ModelParams& params, const TimeGrid& grid, std::uint64_t seed) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot open " + file.string() + " for writing");
  out << "path_id,H,a,sigma,T,n,F,energy,lower_bound,second_deriv_bound,seed\n";
  char buf[512];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%llu\n", s.path_id,
                  hurst.value(), params.a, params.sigma, params.horizon, grid.steps(), s.F, s.energy, s.lower_bound,
                  s.second_deriv_bound, static_cast<unsigned long long>(seed));
    out << buf;
  }
  if (!out) throw FormatError("write failed for " + file.string());
}

}  // namespace fexpo
