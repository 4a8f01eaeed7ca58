#pragma once

#include <cstddef>
#include <functional>

namespace flipbound {

// Worker count used by parallel_for; 0 or 1 runs inline. Defaults to 1.
void set_thread_count(int threads);
int thread_count();

// Calls body(i) for i in [0, n). Work is split into contiguous chunks, one
// per worker; results must be written per index, so output order never
// depends on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace flipbound
