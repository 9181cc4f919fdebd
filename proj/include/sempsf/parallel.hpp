#pragma once

#include <cstddef>
#include <functional>

namespace sempsf {

/// Process-wide cap on worker threads (>= 1). Every parallel loop in the
/// library writes disjoint outputs per index, so results never depend on it.
void set_thread_count(int n);
int thread_count();

/// Calls body(i) for i in [begin, end), split into contiguous chunks.
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end,
                  const std::function<void(std::ptrdiff_t)>& body);

}  // namespace sempsf
