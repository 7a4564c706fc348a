#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace depthweave {

/// Worker cap used by all data-parallel loops. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries depend
/// only on n and `grain`, never on the number of workers, so any per-chunk
/// reduction combined in chunk order is deterministic.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Deterministic parallel sum of f(i) over [0, n).
double parallel_sum(std::size_t n, std::size_t grain, const std::function<double(std::size_t)>& f);

}  // namespace depthweave
