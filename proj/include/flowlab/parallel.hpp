#pragma once

#include <cstddef>
#include <functional>

namespace flowlab {

/// Worker cap: FLOWLAB_THREADS if set to a positive integer, else hardware concurrency.
std::size_t worker_count();

/// Runs `body(chunk_index, begin, end)` over [0, n) split into `chunks` fixed
/// contiguous ranges. Chunk boundaries depend only on n and `chunks`, never on
/// the number of workers, so per-chunk RNG streams give reproducible results.
void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

}  // namespace flowlab
