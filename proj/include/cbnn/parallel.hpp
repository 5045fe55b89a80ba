#pragma once

#include <cstddef>
#include <functional>

namespace cbnn {

/// Process-wide cap on worker threads used by kernels and trial loops.
void set_thread_count(int threads);
int thread_count();

/// Runs body(begin, end) over a static partition of [0, n). Each index is
/// visited exactly once; results must not depend on the partition.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cbnn
