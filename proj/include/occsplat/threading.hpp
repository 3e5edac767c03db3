#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace occsplat {

// Number of workers used by parallel_for. 0 = use hardware_concurrency.
void set_worker_count(int n);
int worker_count();

// Runs fn(begin, end) over disjoint chunks of [0, n). Chunk boundaries
// depend only on n and grain, never on the worker count, so any
// per-chunk partial results can be reduced in a fixed order by the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain = 1);

// Fixed chunking used by parallel_for; exposed so callers can size
// per-chunk accumulators.
std::size_t chunk_count(std::size_t n, std::size_t grain);

}  // namespace occsplat
