#include "fexpo/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <vector>

#include "fexpo/estimate.hpp"

namespace fexpo {

Estimate RunningMoments::estimate() const noexcept {
  if (count_ == 0) return {};
  return {mean_, std::sqrt(variance() / static_cast<double>(count_))};
}

void for_each_block(std::size_t n_paths,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& body,
                    Execution exec) {
  const std::size_t blocks = block_count(n_paths);
  std::vector<std::exception_ptr> failures(blocks);
  auto run = [&](std::size_t b) {
    const std::size_t first = b * kPathBlock;
    try {
      body(b, first, std::min(kPathBlock, n_paths - first));
    } catch (...) {
      failures[b] = std::current_exception();
    }
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) run(static_cast<std::size_t>(b));
  } else {
    for (std::size_t b = 0; b < blocks; ++b) run(b);
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace fexpo
