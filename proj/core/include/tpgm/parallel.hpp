#pragma once

#include <cstddef>
#include <functional>

namespace tpgm {

/// Worker count from TPGM_WORKERS, else hardware concurrency (at least 1).
std::size_t default_worker_count();

/// Calls fn(i) for i in [0, count) on up to `workers` threads. Each index runs
/// exactly once; callers write results into slot i so the outcome does not
/// depend on scheduling. The first exception thrown is rethrown after all
/// workers finish.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace tpgm
