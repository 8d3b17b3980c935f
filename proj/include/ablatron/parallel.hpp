#pragma once

#include <cstddef>
#include <functional>

namespace ablatron {

/// Worker count from ABLATRON_THREADS (unset or 0 = hardware concurrency).
std::size_t worker_count();

/// Calls fn(i) for i in [0, count) on up to `threads` workers. Each index is
/// visited exactly once; the first exception thrown is rethrown here after
/// all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, std::size_t threads = worker_count());

}  // namespace ablatron
