#pragma once

#include <cstddef>
#include <functional>

namespace bat {

/// Worker count: BAT_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) over contiguous chunks. Results must be
/// written by index; the first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace bat
