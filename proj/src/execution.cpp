#include "fexpo/execution.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace fexpo {

int configure_threads_from_env() {
  if (const char* env = std::getenv("FEXPO_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0) omp_set_num_threads(cap);
    } catch (const std::exception&) {
      // Unparseable values leave the OpenMP default in place.
    }
  }
  return omp_get_max_threads();
}

}  // namespace fexpo
