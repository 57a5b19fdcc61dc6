#pragma once

#include <cstddef>
#include <functional>

namespace kda {

// Worker count from KDA_WORKERS (default: hardware concurrency, at least 1).
int worker_count();

// Runs fn(i) for i in [0, n) on a bounded pool. Callers write into slot i only,
// so results never depend on scheduling. The exception of the lowest failing
// index is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int workers = 0);

}  // namespace kda
