#pragma once

#include <cstddef>
#include <functional>

namespace wlc {

/// Worker count: $WLC_THREADS if set to a positive integer, otherwise
/// std::thread::hardware_concurrency() (at least 1).
std::size_t default_thread_count();

/// Calls body(i) for every i in [0, n) on up to `threads` workers. Indices are
/// handed out dynamically, so `body` must only write to slots owned by i.
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace wlc
