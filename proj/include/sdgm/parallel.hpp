#pragma once

#include <cstddef>
#include <functional>

namespace sdgm {

// Worker cap for parallel_for; 1 (the default) runs everything inline.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Calls fn(i) for i in [0, n). Each index is handled by exactly one worker,
// so callers that only write index-owned outputs stay deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sdgm
