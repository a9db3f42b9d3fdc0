#include "fexpo/fbm.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <mutex>
#include <utility>

#include "binary_io.hpp"
#include "fexpo/blocks.hpp"
#include "fexpo/error.hpp"
#include "fexpo/kernels.hpp"

namespace fexpo {
namespace {

// The FFTW planner is not thread safe; execution of an existing plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void check_out(const Matrix& out, const TimeGrid& grid, const char* who) {
  if (out.cols() != grid.size()) throw std::invalid_argument(std::string(who) + ": output needs n+1 columns");
}

constexpr std::size_t kPathHeaderBytes = 28;

}  // namespace

std::string_view generator_name(Generator g) {
  switch (g) {
    case Generator::cholesky: return "cholesky";
    case Generator::circulant: return "circulant";
    case Generator::volterra: return "volterra";
    case Generator::imported: return "imported";
  }
  return "unknown";
}

Generator parse_generator(std::string_view name) {
  if (name == "cholesky") return Generator::cholesky;
  if (name == "circulant") return Generator::circulant;
  if (name == "volterra") return Generator::volterra;
  throw std::invalid_argument("unknown generator '" + std::string(name) +
                              "' (expected cholesky, circulant or volterra)");
}

const PathBatch& CoupledPathSet::member(HurstIndex hurst) const {
  for (const auto& m : members)
    if (m.hurst == hurst) return m;
  throw MismatchError("H = " + std::to_string(hurst.value()) + " is not a member of this coupled path set");
}

// ---------------------------------------------------------------- Cholesky

Matrix cholesky_factor(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("cholesky_factor: matrix is not square");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw FactorizationError(j, d);
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / root;
    }
  }
  return l;
}

CholeskySampler::CholeskySampler(HurstIndex hurst, const TimeGrid& grid) : hurst_(hurst), grid_(grid) {
  const std::size_t n = grid.steps();
  Matrix cov(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      cov(i, j) = cov(j, i) = fbm_covariance(hurst, grid.node(i + 1), grid.node(j + 1));
  lower_t_ = transpose(cholesky_factor(cov));
}

Matrix CholeskySampler::factor() const { return transpose(lower_t_); }

void CholeskySampler::sample(std::uint64_t seed, Matrix& out, Execution exec) const {
  check_out(out, grid_, "CholeskySampler::sample");
  Matrix z(out.rows(), grid_.steps());
  NormalStream(seed).fill(z.data());
  kernels::lower_triangular_map(lower_t_, z, out, exec);
}

// ---------------------------------------------------------------- circulant

double increment_autocovariance(HurstIndex hurst, std::size_t lag) {
  const double h2 = 2.0 * hurst.value();
  const double k = static_cast<double>(lag);
  if (lag == 0) return 1.0;
  return 0.5 * (std::pow(k + 1.0, h2) + std::pow(k - 1.0, h2) - 2.0 * std::pow(k, h2));
}

struct CirculantSampler::Plan {
  fftw_plan plan = nullptr;
  std::size_t size = 0;
};

CirculantSampler::CirculantSampler(HurstIndex hurst, const TimeGrid& grid)
    : hurst_(hurst), grid_(grid), plan_(std::make_unique<Plan>()) {
  const std::size_t n = grid.steps();
  const std::size_t m = 2 * n;
  plan_->size = m;
  auto* in = fftw_alloc_complex(m);
  auto* out = fftw_alloc_complex(m);
  {
    // FFTW_ESTIMATE keeps the plan, and so the roundoff, independent of timing.
    std::lock_guard lock(planner_mutex());
    plan_->plan = fftw_plan_dft_1d(static_cast<int>(m), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t lag = k <= n ? k : m - k;
    in[k][0] = increment_autocovariance(hurst, lag);
    in[k][1] = 0.0;
  }
  fftw_execute(plan_->plan);
  eigen_.resize(m);
  double most_negative = 0.0;
  double largest = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    eigen_[k] = out[k][0];
    most_negative = std::min(most_negative, eigen_[k]);
    largest = std::max(largest, eigen_[k]);
  }
  fftw_free(in);
  fftw_free(out);
  if (most_negative < -1e-10 * largest) throw EmbeddingError(most_negative);
  for (double& e : eigen_) e = std::max(e, 0.0);
}

CirculantSampler::~CirculantSampler() {
  if (plan_ && plan_->plan) {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_->plan);
  }
}

void CirculantSampler::sample(std::uint64_t seed, Matrix& out, Execution exec) const {
  check_out(out, grid_, "CirculantSampler::sample");
  const std::size_t n = grid_.steps();
  const std::size_t m = plan_->size;
  const std::size_t rows = out.rows();
  const std::size_t pairs = (rows + 1) / 2;
  // Increments of B^H on a grid of step dt scale as dt^H.
  const double scale = std::pow(grid_.step(), hurst_.value());
  std::vector<double> amplitude(m);
  for (std::size_t k = 0; k < m; ++k) amplitude[k] = scale * std::sqrt(eigen_[k] / static_cast<double>(m));

  // Normals are drawn up front in pair order, so the parallel loop below
  // consumes exactly what the serial one does.
  std::vector<double> z(pairs * 2 * m);
  NormalStream(seed).fill(z);

  auto one_pair = [&](std::size_t p, fftw_complex* in, fftw_complex* spec) {
    const double* zp = z.data() + p * 2 * m;
    for (std::size_t k = 0; k < m; ++k) {
      in[k][0] = amplitude[k] * zp[2 * k];
      in[k][1] = amplitude[k] * zp[2 * k + 1];
    }
    fftw_execute_dft(plan_->plan, in, spec);
    const std::size_t r0 = 2 * p;
    out(r0, 0) = 0.0;
    for (std::size_t i = 0; i < n; ++i) out(r0, i + 1) = out(r0, i) + spec[i][0];
    if (r0 + 1 < rows) {
      out(r0 + 1, 0) = 0.0;
      for (std::size_t i = 0; i < n; ++i) out(r0 + 1, i + 1) = out(r0 + 1, i) + spec[i][1];
    }
  };

  if (exec == Execution::parallel) {
#pragma omp parallel
    {
      fftw_complex* in = fftw_alloc_complex(m);
      fftw_complex* spec = fftw_alloc_complex(m);
#pragma omp for schedule(static)
      for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(pairs); ++p)
        one_pair(static_cast<std::size_t>(p), in, spec);
      fftw_free(in);
      fftw_free(spec);
    }
  } else {
    fftw_complex* in = fftw_alloc_complex(m);
    fftw_complex* spec = fftw_alloc_complex(m);
    for (std::size_t p = 0; p < pairs; ++p) one_pair(p, in, spec);
    fftw_free(in);
    fftw_free(spec);
  }
}

// ---------------------------------------------------------------- Volterra

VolterraSampler::VolterraSampler(std::vector<WeightMatrix> weights)
    : grid_(weights.empty() ? throw std::invalid_argument("VolterraSampler needs at least one H") : weights[0].grid) {
  const double root_dt = std::sqrt(grid_.step());
  for (auto& w : weights) {
    if (!(w.grid == grid_)) throw MismatchError("weight matrices were built on different grids");
    hurst_.push_back(w.hurst);
    brownian_.push_back(w.hurst.is_brownian() && w.weights(0, 0) == root_dt);
    lower_t_.push_back(transpose(w.weights));
  }
}

void VolterraSampler::sample(std::uint64_t seed, Matrix& increments, std::vector<Matrix>& paths,
                             Execution exec) const {
  const std::size_t n = grid_.steps();
  const std::size_t rows = increments.rows();
  if (increments.cols() != n) throw std::invalid_argument("VolterraSampler::sample: increments need n columns");
  Matrix xi(rows, n);
  NormalStream(seed).fill(xi.data());
  const double root_dt = std::sqrt(grid_.step());
  auto inc = increments.data();
  auto x = xi.data();
  for (std::size_t k = 0; k < inc.size(); ++k) inc[k] = root_dt * x[k];
  paths.resize(hurst_.size());
  for (std::size_t k = 0; k < hurst_.size(); ++k) {
    if (paths[k].rows() != rows || paths[k].cols() != n + 1) paths[k] = Matrix(rows, n + 1);
    if (brownian_[k]) {
      kernels::cumulative_rows(increments, paths[k], exec);
    } else {
      kernels::lower_triangular_map(lower_t_[k], xi, paths[k], exec);
    }
  }
}

// ---------------------------------------------------------------- batches

namespace {

template <class Sampler>
PathBatch sample_batch(const Sampler& s, Generator g, std::size_t n_paths, RngStreamSpec rng) {
  if (n_paths == 0) throw std::invalid_argument("n_paths must be positive");
  PathBatch batch{s.hurst(), s.grid(), Matrix(n_paths, s.grid().size()), g, rng};
  for_each_block(n_paths, [&](std::size_t b, std::size_t first, std::size_t count) {
    Matrix block(count, s.grid().size());
    s.sample(substream_seed(rng, b), block);
    std::copy(block.data().begin(), block.data().end(), batch.values.row(first).begin());
  });
  return batch;
}

template <class Sampler>
void stream_batch(const Sampler& s, std::size_t n_paths, RngStreamSpec rng, const BlockVisitor& visit) {
  for_each_block(n_paths, [&](std::size_t b, std::size_t first, std::size_t count) {
    Matrix block(count, s.grid().size());
    s.sample(substream_seed(rng, b), block);
    visit(b, first, block);
  });
}

}  // namespace

PathBatch cholesky_paths(HurstIndex hurst, const TimeGrid& grid, std::size_t n_paths, RngStreamSpec rng) {
  return sample_batch(CholeskySampler(hurst, grid), Generator::cholesky, n_paths, rng);
}

PathBatch circulant_paths(HurstIndex hurst, const TimeGrid& grid, std::size_t n_paths, RngStreamSpec rng) {
  return sample_batch(CirculantSampler(hurst, grid), Generator::circulant, n_paths, rng);
}

void stream_paths(const CholeskySampler& s, std::size_t n_paths, RngStreamSpec rng, const BlockVisitor& visit) {
  stream_batch(s, n_paths, rng, visit);
}

void stream_paths(const CirculantSampler& s, std::size_t n_paths, RngStreamSpec rng, const BlockVisitor& visit) {
  stream_batch(s, n_paths, rng, visit);
}

void stream_coupled_paths(const VolterraSampler& s, std::size_t n_paths, RngStreamSpec rng,
                          const CoupledBlockVisitor& visit) {
  for_each_block(n_paths, [&](std::size_t b, std::size_t first, std::size_t count) {
    Matrix increments(count, s.grid().steps());
    std::vector<Matrix> paths;
    s.sample(substream_seed(rng, b), increments, paths);
    visit(b, first, increments, paths);
  });
}

CoupledPathSet volterra_coupled_paths(std::vector<WeightMatrix> weights, std::size_t n_paths, RngStreamSpec rng) {
  if (n_paths == 0) throw std::invalid_argument("n_paths must be positive");
  const VolterraSampler sampler(std::move(weights));
  const TimeGrid& grid = sampler.grid();
  CoupledPathSet set{grid, rng, Matrix(n_paths, grid.steps()), {}};
  for (std::size_t k = 0; k < sampler.members(); ++k)
    set.members.push_back(PathBatch{sampler.hurst(k), grid, Matrix(n_paths, grid.size()), Generator::volterra, rng});
  stream_coupled_paths(sampler, n_paths, rng,
                       [&](std::size_t, std::size_t first, const Matrix& inc, const std::vector<Matrix>& paths) {
                         std::copy(inc.data().begin(), inc.data().end(), set.increments.row(first).begin());
                         for (std::size_t k = 0; k < paths.size(); ++k)
                           std::copy(paths[k].data().begin(), paths[k].data().end(),
                                     set.members[k].values.row(first).begin());
                       });
  return set;
}

CoupledPathSet volterra_coupled_paths(std::span<const HurstIndex> hurst, const TimeGrid& grid, std::size_t n_paths,
                                      RngStreamSpec rng, double quad_tol) {
  std::vector<WeightMatrix> weights;
  for (HurstIndex h : hurst)
    weights.push_back(integrated_kernel_weights(KernelEvaluator(h, grid.horizon(), quad_tol), grid));
  return volterra_coupled_paths(std::move(weights), n_paths, rng);
}

// ---------------------------------------------------------------- distances

void NodeSquareAccumulator::add(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != nodes_.size() || y.cols() != nodes_.size())
    throw MismatchError("coupled path blocks differ in shape");
  for (std::size_t p = 0; p < x.rows(); ++p)
    for (std::size_t m = 0; m < nodes_.size(); ++m) {
      const double d = x(p, m) - y(p, m);
      nodes_[m].add(d * d);
    }
}

void NodeSquareAccumulator::merge(const NodeSquareAccumulator& other) {
  if (other.nodes_.size() != nodes_.size()) throw MismatchError("accumulators differ in node count");
  for (std::size_t m = 0; m < nodes_.size(); ++m) nodes_[m].merge(other.nodes_[m]);
}

Estimate NodeSquareAccumulator::sup_estimate() const {
  std::size_t best = 0;
  for (std::size_t m = 1; m < nodes_.size(); ++m)
    if (nodes_[m].mean() > nodes_[best].mean()) best = m;
  return nodes_.empty() ? Estimate{} : nodes_[best].estimate();
}

Estimate sup_l2_increment_distance(const CoupledPathSet& cps, HurstIndex h1, HurstIndex h2) {
  const PathBatch& a = cps.member(h1);
  const PathBatch& b = cps.member(h2);
  if (&a == &b) return {};
  const std::size_t nodes = cps.grid.size();
  std::vector<NodeSquareAccumulator> parts(block_count(cps.paths()), NodeSquareAccumulator(nodes));
  for_each_block(cps.paths(), [&](std::size_t blk, std::size_t first, std::size_t count) {
    Matrix x(count, nodes), y(count, nodes);
    std::copy_n(a.values.row(first).begin(), count * nodes, x.data().begin());
    std::copy_n(b.values.row(first).begin(), count * nodes, y.data().begin());
    parts[blk].add(x, y);
  });
  NodeSquareAccumulator total(nodes);
  for (const auto& p : parts) total.merge(p);
  return total.sup_estimate();
}

// ---------------------------------------------------------------- I/O

struct PathWriter::Impl {
  std::fstream out;
  std::filesystem::path file;
  std::size_t n_paths;
  std::size_t nodes;
  std::size_t written = 0;
  std::mutex mu;
};

PathWriter::PathWriter(const std::filesystem::path& file, std::size_t n_paths, std::size_t nodes, HurstIndex hurst,
                       std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
  impl_->file = file;
  impl_->n_paths = n_paths;
  impl_->nodes = nodes;
  impl_->out.open(file, std::ios::binary | std::ios::out | std::ios::trunc);
  if (!impl_->out) throw FormatError("cannot open " + file.string() + " for writing");
  impl_->out.write("FBM1", 4);
  detail::put_le<std::uint32_t>(impl_->out, static_cast<std::uint32_t>(n_paths));
  detail::put_le<std::uint32_t>(impl_->out, static_cast<std::uint32_t>(nodes));
  detail::put_f64(impl_->out, hurst.value());
  detail::put_le<std::uint64_t>(impl_->out, seed);
}

PathWriter::~PathWriter() = default;

void PathWriter::write_rows(std::size_t first_path, const Matrix& rows) {
  if (rows.cols() != impl_->nodes || first_path + rows.rows() > impl_->n_paths)
    throw MismatchError("path rows do not fit the FBM1 layout");
  std::string bytes(rows.data().size() * 8, '\0');
  for (std::size_t k = 0; k < rows.data().size(); ++k) {
    const auto bits = std::bit_cast<std::uint64_t>(rows.data()[k]);
    for (int i = 0; i < 8; ++i) bytes[8 * k + i] = static_cast<char>(bits >> (8 * i));
  }
  std::lock_guard lock(impl_->mu);
  impl_->out.seekp(static_cast<std::streamoff>(kPathHeaderBytes + first_path * impl_->nodes * 8));
  impl_->out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!impl_->out) throw FormatError("write failed for " + impl_->file.string());
  impl_->written += rows.rows();
}

void PathWriter::close() {
  if (impl_->written != impl_->n_paths) throw FormatError("FBM1 file closed before all paths were written");
  impl_->out.close();
  if (!impl_->out) throw FormatError("write failed for " + impl_->file.string());
}

void write_paths_binary(const std::filesystem::path& file, const PathBatch& batch) {
  PathWriter w(file, batch.paths(), batch.grid.size(), batch.hurst, batch.rng.master_seed);
  w.write_rows(0, batch.values);
  w.close();
}

PathBatch read_paths_binary(const std::filesystem::path& file, double horizon) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open " + file.string());
  detail::expect_magic(in, "FBM1");
  const auto n_paths = detail::get_le<std::uint32_t>(in, "FBM1 header");
  const auto nodes = detail::get_le<std::uint32_t>(in, "FBM1 header");
  const double h = detail::get_f64(in, "FBM1 header");
  const auto seed = detail::get_le<std::uint64_t>(in, "FBM1 header");
  if (n_paths == 0) throw FormatError("FBM1 header: zero paths");
  if (nodes < 3) throw FormatError("FBM1 header: need at least 3 grid nodes, got " + std::to_string(nodes));
  if (!(h > 0.0 && h < 1.0)) throw FormatError("FBM1 header: H outside (0, 1)");
  const auto expected = kPathHeaderBytes + std::uintmax_t{n_paths} * nodes * 8;
  if (std::filesystem::file_size(file) != expected)
    throw FormatError("FBM1 payload size does not match the header");
  PathBatch batch{HurstIndex(h), TimeGrid(horizon, nodes - 1), Matrix(n_paths, nodes), Generator::imported,
                  RngStreamSpec{seed, 0}};
  for (double& v : batch.values.data()) v = detail::get_f64(in, "FBM1 payload");
  for (std::size_t p = 0; p < n_paths; ++p) {
    if (batch.values(p, 0) != 0.0) throw FormatError("FBM1 path " + std::to_string(p) + " does not start at 0");
    for (double v : batch.values.row(p))
      if (!std::isfinite(v)) throw FormatError("FBM1 path " + std::to_string(p) + " has a non-finite value");
  }
  return batch;
}

void write_paths_csv(const std::filesystem::path& file, const PathBatch& batch) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot open " + file.string() + " for writing");
  out.precision(17);
  for (std::size_t p = 0; p < batch.paths(); ++p) {
    const auto row = batch.values.row(p);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
}

}  // namespace fexpo
