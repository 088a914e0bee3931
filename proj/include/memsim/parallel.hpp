#pragma once

#include <cstddef>
#include <functional>

namespace memsim {

/// Number of worker threads: hardware concurrency, capped by MEMSIM_THREADS when set.
std::size_t max_threads();

/// Runs body(i) for i in [0, n). Tasks must write only to their own slot;
/// results are then independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace memsim
