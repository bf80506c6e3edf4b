#pragma once

#include <cstddef>
#include <functional>

namespace arccm {

/// Worker count from an explicit request, else ARCCM_THREADS, else the
/// hardware concurrency (at least 1).
int ResolveThreads(int requested);

/// Runs body(index, worker) for every index in [0, count). Work is handed
/// out dynamically, so callers must write results into per-index slots and
/// reduce them in index order afterwards to stay deterministic. `worker` is
/// in [0, threads) and identifies per-thread scratch space.
void ParallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t, int)>& body);

}  // namespace arccm
