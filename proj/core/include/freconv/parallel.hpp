#pragma once

#include <cstdint>
#include <functional>

namespace freconv {

// Global worker cap. 1 (the default) means strictly serial execution.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [begin, end). Chunks are contiguous and every index is
// handled exactly once, so callers writing to disjoint locations get
// bit-identical results for any thread count.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace freconv
