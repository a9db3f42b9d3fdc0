#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fexpo/blocks.hpp"
#include "fexpo/estimate.hpp"
#include "fexpo/rng.hpp"

using namespace fexpo;

TEST_CASE("normal quantile against reference values") {
  // Values of the standard normal quantile to 16 digits.
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-15));
  CHECK(normal_quantile(0.1) == doctest::Approx(-1.2815515655446004).epsilon(1e-15));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-14));
  CHECK(normal_quantile(1e-300) == doctest::Approx(-37.0470962993612).epsilon(1e-12));
}

TEST_CASE("normal quantile is odd and monotone") {
  double prev = -INFINITY;
  for (int k = 1; k < 2000; ++k) {
    const double p = k / 2000.0;
    const double x = normal_quantile(p);
    CHECK(x > prev);
    CHECK(normal_quantile(1.0 - p) == doctest::Approx(-x).epsilon(1e-13));
    // Round trip through the normal CDF.
    CHECK(0.5 * std::erfc(-x / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-13));
    prev = x;
  }
}

TEST_CASE("substream seeds") {
  const RngStreamSpec a{42, 3};
  CHECK(substream_seed(a, 0) == substream_seed(RngStreamSpec{42, 3}, 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream = 0; stream < 20; ++stream)
    for (std::uint64_t block = 0; block < 50; ++block) seen.insert(substream_seed({42, stream}, block));
  CHECK(seen.size() == 1000);
  CHECK(substream_seed({1, 0}, 0) != substream_seed({2, 0}, 0));
  static_assert(substream_seed({0, 0}, 0) != 0);
}

TEST_CASE("normal stream moments") {
  NormalStream z(substream_seed({42, 0}, 0));
  RunningMoments m;
  double third = 0.0, fourth = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = z();
    m.add(x);
    third += x * x * x;
    fourth += x * x * x * x;
  }
  CHECK(std::abs(m.mean()) < 4.0 / std::sqrt(n));
  CHECK(std::abs(m.variance() - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(third / n) < 4.0 * std::sqrt(15.0 / n));
  CHECK(std::abs(fourth / n - 3.0) < 4.0 * std::sqrt(96.0 / n));

  NormalStream u(9);
  for (int i = 0; i < 10000; ++i) {
    const double v = u.uniform();
    CHECK((v > 0.0 && v < 1.0));
  }
}

TEST_CASE("normal stream is reproducible and fill scales") {
  NormalStream a(123), b(123);
  std::vector<double> x(100), y(100);
  a.fill(x, 2.0);
  for (double& v : y) v = 2.0 * b();
  CHECK(x == y);
}

TEST_CASE("running moments merge equals sequential accumulation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(3.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(500 + trial * 37);
    for (double& v : xs) v = z(rng);
    RunningMoments all;
    for (double v : xs) all.add(v);
    const std::size_t cut = rng() % xs.size();
    RunningMoments left, right;
    for (std::size_t i = 0; i < cut; ++i) left.add(xs[i]);
    for (std::size_t i = cut; i < xs.size(); ++i) right.add(xs[i]);
    left.merge(right);
    CHECK(left.count() == all.count());
    CHECK(left.mean() == doctest::Approx(all.mean()).epsilon(1e-12));
    CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-10));
  }
  RunningMoments empty, one;
  one.add(4.0);
  empty.merge(one);
  CHECK(empty.mean() == 4.0);
  CHECK(empty.variance() == 0.0);
  RunningMoments two;
  two.add(1.0);
  two.add(3.0);
  const Estimate e = two.estimate();
  CHECK(e.value == 2.0);
  CHECK(e.std_error == doctest::Approx(1.0));
}

TEST_CASE("block iteration") {
  CHECK(block_count(1) == 1);
  CHECK(block_count(kPathBlock) == 1);
  CHECK(block_count(kPathBlock + 1) == 2);
  for (Execution exec : {Execution::serial, Execution::parallel}) {
    const std::size_t n = 3 * kPathBlock + 17;
    std::vector<int> hits(n, 0);
    for_each_block(
        n,
        [&](std::size_t b, std::size_t first, std::size_t count) {
          CHECK(first == b * kPathBlock);
          for (std::size_t i = first; i < first + count; ++i) ++hits[i];
        },
        exec);
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
}

TEST_CASE("block failures rethrow the lowest block") {
  for (Execution exec : {Execution::serial, Execution::parallel}) {
    std::atomic<int> visited{0};
    try {
      for_each_block(
          5 * kPathBlock,
          [&](std::size_t b, std::size_t, std::size_t) {
            ++visited;
            if (b == 1 || b == 3) throw std::runtime_error("block " + std::to_string(b));
          },
          exec);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "block 1");
    }
    CHECK(visited.load() == 5);
  }
}
