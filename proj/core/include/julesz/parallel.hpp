#pragma once

#include <cstddef>
#include <functional>

namespace julesz {

/// Worker count for batch-parallel kernels. Initialized from JULESZ_THREADS;
/// 0 or 1 means single-threaded, which is the default.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Each index must write disjoint memory; any
/// cross-index reduction is done by the caller afterwards in index order, so
/// results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace julesz
