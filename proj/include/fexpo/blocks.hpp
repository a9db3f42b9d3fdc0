#pragma once

#include <cstddef>
#include <functional>

#include "fexpo/execution.hpp"
#include "fexpo/rng.hpp"

namespace fexpo {

inline std::size_t block_count(std::size_t n_paths) noexcept {
  return (n_paths + kPathBlock - 1) / kPathBlock;
}

// Calls body(block, first_path, count) for every path block. Under
// Execution::parallel blocks run concurrently; the failure of the lowest
// block index is rethrown once all blocks have finished.
void for_each_block(std::size_t n_paths,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& body,
                    Execution exec = Execution::parallel);

}  // namespace fexpo
