#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fexpo/estimate.hpp"
#include "fexpo/execution.hpp"
#include "fexpo/kernel.hpp"
#include "fexpo/matrix.hpp"
#include "fexpo/rng.hpp"

namespace fexpo {

enum class Generator { cholesky, circulant, volterra, imported };

std::string_view generator_name(Generator g);
// Accepts "cholesky", "circulant" and "volterra".
Generator parse_generator(std::string_view name);

// Simulated B^H at the grid nodes; rows are paths, column 0 is zero.
struct PathBatch {
  HurstIndex hurst;
  TimeGrid grid;
  Matrix values;
  Generator generator;
  RngStreamSpec rng;
  std::string normal_method{kNormalMethod};

  std::size_t paths() const noexcept { return values.rows(); }
};

// Batches for several H driven by one set of Brownian increments.
struct CoupledPathSet {
  TimeGrid grid;
  RngStreamSpec rng;
  Matrix increments;  // n_paths x n
  std::vector<PathBatch> members;

  std::size_t paths() const noexcept { return increments.rows(); }
  // MismatchError if H is not a member.
  const PathBatch& member(HurstIndex hurst) const;
};

// Exact sampler: Cholesky factor of the covariance at t_1..t_n.
class CholeskySampler {
 public:
  CholeskySampler(HurstIndex hurst, const TimeGrid& grid);

  HurstIndex hurst() const noexcept { return hurst_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  // Lower-triangular factor L with L L^T = covariance.
  Matrix factor() const;

  // Fills out (rows x (n+1)) with paths from the substream `seed`.
  void sample(std::uint64_t seed, Matrix& out, Execution exec = Execution::serial) const;

 private:
  HurstIndex hurst_;
  TimeGrid grid_;
  Matrix lower_t_;
};

// Lower Cholesky factor of a symmetric positive definite matrix.
// FactorizationError names the first non-positive pivot.
Matrix cholesky_factor(const Matrix& a);

// Davies-Harte circulant embedding of the increment autocovariance,
// embedding size 2n. Each complex FFT yields two independent paths.
class CirculantSampler {
 public:
  CirculantSampler(HurstIndex hurst, const TimeGrid& grid);
  ~CirculantSampler();
  CirculantSampler(const CirculantSampler&) = delete;
  CirculantSampler& operator=(const CirculantSampler&) = delete;

  HurstIndex hurst() const noexcept { return hurst_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> eigenvalues() const noexcept { return eigen_; }

  void sample(std::uint64_t seed, Matrix& out, Execution exec = Execution::serial) const;

 private:
  struct Plan;
  HurstIndex hurst_;
  TimeGrid grid_;
  std::vector<double> eigen_;
  std::unique_ptr<Plan> plan_;
};

// gamma(k) = (|k+1|^{2H} + |k-1|^{2H} - 2|k|^{2H}) / 2, unit-step increments.
double increment_autocovariance(HurstIndex hurst, std::size_t lag);

// Common-W sampler: one block of standard normals xi, Delta W = sqrt(dt) xi,
// and B^H = W_H xi for every member weight matrix.
class VolterraSampler {
 public:
  explicit VolterraSampler(std::vector<WeightMatrix> weights);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t members() const noexcept { return hurst_.size(); }
  HurstIndex hurst(std::size_t k) const noexcept { return hurst_[k]; }

  // increments: rows x n; paths[k]: rows x (n+1).
  void sample(std::uint64_t seed, Matrix& increments, std::vector<Matrix>& paths,
              Execution exec = Execution::serial) const;

 private:
  TimeGrid grid_;
  std::vector<HurstIndex> hurst_;
  std::vector<Matrix> lower_t_;
  std::vector<bool> brownian_;
};

PathBatch cholesky_paths(HurstIndex hurst, const TimeGrid& grid, std::size_t n_paths, RngStreamSpec rng);
PathBatch circulant_paths(HurstIndex hurst, const TimeGrid& grid, std::size_t n_paths, RngStreamSpec rng);
CoupledPathSet volterra_coupled_paths(std::span<const HurstIndex> hurst, const TimeGrid& grid,
                                      std::size_t n_paths, RngStreamSpec rng,
                                      double quad_tol = kDefaultQuadTol);
CoupledPathSet volterra_coupled_paths(std::vector<WeightMatrix> weights, std::size_t n_paths, RngStreamSpec rng);

// Streaming: visit(block, first_path, paths) for every block of 4096 paths.
// Blocks may be visited concurrently and in any order.
using BlockVisitor = std::function<void(std::size_t, std::size_t, const Matrix&)>;
void stream_paths(const CholeskySampler& s, std::size_t n_paths, RngStreamSpec rng, const BlockVisitor& visit);
void stream_paths(const CirculantSampler& s, std::size_t n_paths, RngStreamSpec rng, const BlockVisitor& visit);

using CoupledBlockVisitor =
    std::function<void(std::size_t, std::size_t, const Matrix&, const std::vector<Matrix>&)>;
void stream_coupled_paths(const VolterraSampler& s, std::size_t n_paths, RngStreamSpec rng,
                          const CoupledBlockVisitor& visit);

// Per-node sums of squared differences between coupled paths.
class NodeSquareAccumulator {
 public:
  explicit NodeSquareAccumulator(std::size_t nodes) : nodes_(nodes) {}
  void add(const Matrix& x, const Matrix& y);
  void merge(const NodeSquareAccumulator& other);
  // max over nodes of the mean squared difference, stderr at the argmax.
  Estimate sup_estimate() const;

 private:
  std::vector<RunningMoments> nodes_;
};

// sup_s E|B^{H1}_s - B^{H2}_s|^2 over grid nodes.
Estimate sup_l2_increment_distance(const CoupledPathSet& cps, HurstIndex h1, HurstIndex h2);

// Binary layout: "FBM1", u32 n_paths, u32 n+1, f64 H, u64 seed, then row-major f64.
void write_paths_binary(const std::filesystem::path& file, const PathBatch& batch);
PathBatch read_paths_binary(const std::filesystem::path& file, double horizon);
void write_paths_csv(const std::filesystem::path& file, const PathBatch& batch);

// Writes an FBM1 file block by block; blocks may arrive in any order.
class PathWriter {
 public:
  PathWriter(const std::filesystem::path& file, std::size_t n_paths, std::size_t nodes, HurstIndex hurst,
             std::uint64_t seed);
  ~PathWriter();
  PathWriter(const PathWriter&) = delete;
  PathWriter& operator=(const PathWriter&) = delete;

  void write_rows(std::size_t first_path, const Matrix& rows);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fexpo
