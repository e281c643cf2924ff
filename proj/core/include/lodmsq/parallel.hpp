#pragma once

#include <cstddef>
#include <functional>

namespace lodmsq {

/// Number of worker threads to use when the caller passes 0.
int default_thread_count();

/// Runs fn(i) for i in [0, n) over `threads` workers with static chunking.
///
/// Callers must only write to per-index outputs so results do not depend on
/// the thread count. Exceptions thrown by fn are rethrown on the caller's
/// thread (first one wins).
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace lodmsq
