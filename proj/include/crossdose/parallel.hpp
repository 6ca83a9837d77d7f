#pragma once

#include <cstddef>
#include <functional>

namespace crossdose {

/// Worker cap: CROSSDOSE_THREADS when set and positive, else hardware concurrency.
unsigned worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Each index is
/// processed exactly once; results must be written to disjoint slots so the
/// outcome is independent of scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace crossdose
