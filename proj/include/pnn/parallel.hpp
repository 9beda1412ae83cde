#pragma once

#include <cstddef>
#include <functional>

namespace pnn {

// Process-wide cap on worker threads used by parallel_for (default 1).
void set_thread_count(int n);
int thread_count();

// Calls fn(i) for every i in [begin, end). Work items must be independent;
// results must not depend on which thread ran which index.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn);

}  // namespace pnn
