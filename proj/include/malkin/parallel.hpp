#pragma once

#include <cstddef>
#include <functional>

namespace malkin {

/// Worker count: hardware concurrency, capped by MALKINKIT_THREADS when set.
unsigned worker_count();

/// Runs body(i) for i in [0, count). Each index is visited exactly once;
/// callers write results into per-index slots so output order never depends
/// on scheduling. The first exception thrown by a body is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace malkin
