#pragma once

#include <cstdint>
#include <functional>

namespace sgan {

// Worker count, from SGAN_THREADS (default 1). Cached after first read.
int worker_threads();

// Runs fn(i) for i in [0, n). Work items must write disjoint outputs;
// each item is computed entirely by one thread, so results are
// bitwise identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace sgan
