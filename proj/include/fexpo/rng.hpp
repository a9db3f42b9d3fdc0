#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace fexpo {

// Paths are generated in blocks of this many; each block owns one substream.
inline constexpr std::size_t kPathBlock = 4096;

// Recorded in every PathBatch so that a batch can be traced to its sampler.
inline constexpr std::string_view kNormalMethod = "mt19937_64+inverse-cdf(AS241)";

struct RngStreamSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_index = 0;

  friend bool operator==(const RngStreamSpec&, const RngStreamSpec&) = default;
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed of the substream used for path block `block`:
//   stream = mix64(master_seed ^ mix64(stream_index))
//   seed   = mix64(stream + (block + 1) * 0x9E3779B97F4A7C15)
constexpr std::uint64_t substream_seed(const RngStreamSpec& spec, std::uint64_t block) noexcept {
  const std::uint64_t stream = mix64(spec.master_seed ^ mix64(spec.stream_index));
  return mix64(stream + (block + 1) * 0x9E3779B97F4A7C15ULL);
}

// Standard normal quantile (Wichura's AS241, about 1e-16 relative accuracy).
double normal_quantile(double p);

// Standard normal draws by inversion of 53-bit uniforms on (0, 1).
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() noexcept {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double operator()() { return normal_quantile(uniform()); }
  void fill(std::span<double> out, double scale = 1.0) {
    for (double& x : out) x = scale * normal_quantile(uniform());
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fexpo
