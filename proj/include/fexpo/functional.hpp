#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fexpo/execution.hpp"
#include "fexpo/kernel.hpp"
#include "fexpo/matrix.hpp"

namespace fexpo {

// Exponents a*s + sigma*B_s above this raise RangeError instead of overflowing.
inline constexpr double kMaxExponent = 700.0;

struct ModelParams {
  double a = 0.0;
  double sigma = 1.0;
  double horizon = 1.0;

  // Throws DomainError for a non-finite value or horizon <= 0.
  void validate() const;
  // As validate(), and also rejects sigma == 0.
  void validate_for_derivatives() const;
};

// Per-path record for CSV export.
struct FunctionalSample {
  std::size_t path_id = 0;
  double F = 0.0;
  std::vector<double> DF;
  double energy = 0.0;
  double lower_bound = 0.0;
  double second_deriv_bound = 0.0;
};

// Composite trapezoid weights on the grid.
std::vector<double> trapezoid_weights(const TimeGrid& grid);

// e^{a t_m + sigma B_m} at every node.
std::vector<double> exponential_values(std::span<const double> path, const ModelParams& params, const TimeGrid& grid);

// F = int_0^T e^{as + sigma B_s} ds by the trapezoid rule on the grid.
double exp_functional(std::span<const double> path, const ModelParams& params, const TimeGrid& grid);

// D_r F blows up like r^{-|H - 1/2|} as r -> 0, so node 0 carries an
// effective value rho * D_{t_1} F. rho makes the first trapezoid panel of
// int D_r^2 dr exact for the deterministic envelope int_r^T K(s, r) ds.
// Equals 1 at H = 1/2.
double boundary_ratio(const KernelEvaluator& ev, const TimeGrid& grid);

// D_r F = sigma int_r^T K(s, r) e^{as + sigma B_s} ds with e^{...} linearly
// interpolated between nodes and the kernel integrated exactly per panel.
// Precomputes the node weights once per (H, grid).
class DerivativeOperator {
 public:
  DerivativeOperator(const KernelEvaluator& ev, const TimeGrid& grid, Execution exec = Execution::parallel);

  HurstIndex hurst() const noexcept { return hurst_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  // gather(m, j): weight of node value m in D_{t_j} F / sigma.
  const Matrix& gather() const noexcept { return gather_; }

  std::vector<double> apply(std::span<const double> path, const ModelParams& params) const;
  // paths: rows x (n+1); out resized to rows x (n+1).
  void apply_rows(const Matrix& paths, const ModelParams& params, Matrix& out,
                  Execution exec = Execution::serial) const;

 private:
  HurstIndex hurst_;
  TimeGrid grid_;
  Matrix gather_;
};

// D_theta D_r F = sigma^2 int_{max(r, theta)}^T K(s, r) K(s, theta) e^{...} ds.
// The weight tensor costs O(n^3) memory; grids above 256 steps are rejected.
class SecondDerivativeOperator {
 public:
  static constexpr std::size_t kMaxSteps = 256;

  SecondDerivativeOperator(const KernelEvaluator& ev, const TimeGrid& grid, Execution exec = Execution::parallel);

  const TimeGrid& grid() const noexcept { return grid_; }
  // Symmetric (n+1) x (n+1) matrix.
  Matrix apply(std::span<const double> path, const ModelParams& params) const;

 private:
  std::size_t pair_index(std::size_t i, std::size_t j) const noexcept;

  HurstIndex hurst_;
  TimeGrid grid_;
  Matrix tensor_;  // row = pair (i <= j), column = node
};

std::vector<double> malliavin_derivative(std::span<const double> path, const ModelParams& params,
                                         const KernelEvaluator& ev, const TimeGrid& grid);
Matrix second_derivative(std::span<const double> path, const ModelParams& params, const KernelEvaluator& ev,
                         const TimeGrid& grid);

// int_0^T DF_r^2 dr, trapezoid.
double derivative_energy(std::span<const double> df, const TimeGrid& grid);
// int int |D_theta D_r F|^2, two-dimensional trapezoid.
double second_derivative_energy(const Matrix& d2, const TimeGrid& grid);

// T^{2H+2}/(2H+2) sigma^2 exp(-2|a|T + 2 min_s sigma B_s), minimum over nodes.
double energy_lower_bound(std::span<const double> path, const ModelParams& params, HurstIndex hurst);
// T sigma^4 int_0^T s^{4H} e^{2as + 2 sigma B_s} ds, trapezoid.
double second_derivative_bound(std::span<const double> path, const ModelParams& params, HurstIndex hurst,
                               const TimeGrid& grid);

// E[F] = int_0^T e^{as + sigma^2 s^{2H}/2} ds.
double mean_oracle(const ModelParams& params, HurstIndex hurst);
// E[F^2] = int int e^{a(s+t) + sigma^2 (s^{2H} + t^{2H} + 2R(s,t))/2} ds dt.
double second_moment_oracle(const ModelParams& params, HurstIndex hurst);

// Columns: path_id,H,a,sigma,T,n,F,energy,lower_bound,second_deriv_bound,seed
void write_functional_csv(const std::filesystem::path& file, std::span<const FunctionalSample> samples,
                          HurstIndex hurst, const ModelParams& params, const TimeGrid& grid, std::uint64_t seed);

}  // namespace fexpo
