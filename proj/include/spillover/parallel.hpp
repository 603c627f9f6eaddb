#pragma once

#include <cstddef>
#include <functional>

namespace spillover {

// Caps the number of worker threads used by the engines; 0 restores the hardware default.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs body(i) for i in [0, n). Iterations must be independent; scheduling never affects results.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace spillover
