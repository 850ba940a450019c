#pragma once

#include <cstddef>
#include <functional>

namespace codecforge {

// Worker count from CODECFORGE_THREADS; 0 (the default) runs everything on
// the calling thread.
std::size_t thread_count();
void set_thread_count(std::size_t threads);

// Splits [0, n) into contiguous chunks. `body(begin, end)` must only write to
// disjoint state, so results do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace codecforge
