#pragma once

namespace fexpo {

// Selects the serial reference loop or the OpenMP loop of a kernel. Both
// produce bitwise-identical results.
enum class Execution { serial, parallel };

// Applies FEXPO_THREADS (if set) as the OpenMP thread cap. Returns the cap in use.
int configure_threads_from_env();

}  // namespace fexpo
