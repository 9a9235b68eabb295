#pragma once
#include <cstddef>
#include <functional>

namespace thermal {

// Effective worker count: min(requested, hardware, THERMAL_THREADS env cap).
// requested <= 0 means "as many as allowed".
int effective_threads(int requested);

// Runs fn(i) for i in [0, n). Deterministic result layout is the caller's
// responsibility (write to disjoint slots); scheduling is block-cyclic.
void parallel_for(size_t n, int requested_threads, const std::function<void(size_t)>& fn);

}  // namespace thermal
