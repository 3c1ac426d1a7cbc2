#pragma once

#include <cstddef>
#include <functional>

namespace motionforge {

/// Worker cap: MOTIONFORGE_THREADS if set and positive, else hardware concurrency.
int worker_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write into per-index slots and reduce in
/// index order, which keeps results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = 0);

}  // namespace motionforge
