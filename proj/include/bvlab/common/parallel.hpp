#pragma once

#include <cstddef>
#include <functional>

namespace bvlab {

// Runs body(i) for i in [0, count) on up to `threads` workers. Work is
// handed out by index, so body must write only to slot i. The exception
// from the lowest failing index is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace bvlab
