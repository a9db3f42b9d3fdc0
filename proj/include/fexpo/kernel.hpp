#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "fexpo/execution.hpp"
#include "fexpo/matrix.hpp"

namespace fexpo {

// Hurst index H, strictly inside (0, 1).
class HurstIndex {
 public:
  // Values this close to 1/2 use the exact Brownian branch everywhere.
  static constexpr double kBrownianBand = 1e-6;

  explicit HurstIndex(double value);

  double value() const noexcept { return value_; }
  bool is_brownian() const noexcept;

  friend bool operator==(HurstIndex, HurstIndex) = default;

 private:
  double value_;
};

// Uniform grid t_i = i * T / n on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps);

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_ + 1; }
  double step() const noexcept { return horizon_ / static_cast<double>(steps_); }
  double node(std::size_t i) const noexcept {
    return static_cast<double>(i) * horizon_ / static_cast<double>(steps_);
  }
  std::vector<double> nodes() const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  std::size_t steps_;
};

inline constexpr double kDefaultQuadTol = 1e-8;

// Volterra kernel K_H(t, s) of fractional Brownian motion against a standard
// Brownian motion, with the normalizing constant calibrated so that
// int_0^1 K_H(1, s)^2 ds = 1. Immutable; safe to share across threads.
class KernelEvaluator {
 public:
  explicit KernelEvaluator(HurstIndex hurst, double horizon = 1.0, double quad_tol = kDefaultQuadTol);

  // Skips calibration and uses the given constant as is.
  static KernelEvaluator with_constant(HurstIndex hurst, double constant, double horizon = 1.0,
                                       double quad_tol = kDefaultQuadTol);

  HurstIndex hurst() const noexcept { return hurst_; }
  double normalizing_constant() const noexcept { return constant_; }
  double horizon() const noexcept { return horizon_; }
  double quad_tol() const noexcept { return quad_tol_; }

  // K_H(t, s) for 0 < s < t <= horizon; DomainError otherwise.
  double operator()(double t, double s) const;

  // K_H(t, s) where gap == t - s is supplied by the caller (so it stays exact
  // when s approaches t). No domain checks.
  double value_with_gap(double t, double s, double gap) const {
    return constant_ * unit_kernel(hurst_, t, s, gap, inner_tol());
  }

  // Kernel with unit normalizing constant.
  static double unit_kernel(HurstIndex hurst, double t, double s, double gap, double inner_tol);

  double inner_tol() const noexcept;

 private:
  KernelEvaluator(HurstIndex hurst, double constant, double horizon, double quad_tol, int);

  HurstIndex hurst_;
  double constant_;
  double horizon_;
  double quad_tol_;
};

double volterra_kernel(const KernelEvaluator& ev, double t, double s);

// Scale factor c_H making the kernel's L2 norm on [0, 1] equal to one.
double calibrate_normalizing_constant(HurstIndex hurst, double quad_tol = kDefaultQuadTol);

// E[B^H_s B^H_t] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2.
double fbm_covariance(HurstIndex hurst, double s, double t);

// int_0^s K_H(s, r)^2 dr (raw quadrature value).
double kernel_l2_norm(const KernelEvaluator& ev, double s);

// int_0^{min(s,t)} K_H(s, r) K_H(t, r) dr.
double kernel_cross_integral(const KernelEvaluator& ev, double s, double t);

// T^{2H+2} / (2H + 2), the closed form of int_0^T int_0^T E[B_s B_t] ds dt.
double covariance_mass(HurstIndex hurst, double horizon);

// Numerical int_0^T int_0^T E[B_s B_t] ds dt.
double double_covariance_integral(HurstIndex hurst, double horizon, double rel_tol = 1e-10);

// int_0^T ( int_r^T K_H(s, r) ds )^2 dr, which equals covariance_mass when the
// kernel is correctly normalized.
double kernel_column_energy(const KernelEvaluator& ev, double horizon);

// Lower-triangular n x n matrix; entry (i-1, j-1) maps the Brownian increment
// on panel j to B^H at node t_i.
struct WeightMatrix {
  HurstIndex hurst;
  TimeGrid grid;
  Matrix weights;

  double row_energy(std::size_t node) const;
};

// w_ij = sign * sqrt( int_{t_{j-1}}^{t_j} K_H(t_i, s)^2 ds ) for j <= i.
WeightMatrix integrated_kernel_weights(const KernelEvaluator& ev, const TimeGrid& grid,
                                       Execution exec = Execution::parallel);

// Binary layout: "FKW1", u32 n, u32 0, u32 0, then n*n little-endian f64 row-major.
void write_weights_binary(const std::filesystem::path& file, const WeightMatrix& w);
WeightMatrix read_weights_binary(const std::filesystem::path& file, HurstIndex hurst, double horizon);
void write_weights_csv(const std::filesystem::path& file, const WeightMatrix& w);

}  // namespace fexpo
