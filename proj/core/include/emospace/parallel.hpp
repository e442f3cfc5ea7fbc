#pragma once

#include <cstddef>
#include <functional>

namespace emospace {

/// Number of worker threads used by data-parallel loops (0 = hardware concurrency).
void set_thread_count(unsigned threads) noexcept;
unsigned thread_count() noexcept;

/// Runs body(i) for i in [0, n) across worker threads in contiguous chunks.
/// Each index is processed exactly once; callers write results by index so the
/// outcome does not depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace emospace
