#pragma once

#include <cstddef>
#include <functional>

namespace ela {

/// Worker count after applying the ELA_ML_THREADS cap. `requested` <= 0
/// means "hardware concurrency".
int worker_count(int requested = 0);

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
/// visited exactly once; results must be written to per-index slots so the
/// outcome does not depend on scheduling. Calls from inside a worker run
/// inline.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

/// True on threads started by parallel_for.
bool inside_worker();

} // namespace ela
