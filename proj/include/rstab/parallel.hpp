#pragma once

#include <functional>

namespace rstab {

// requested > 0 wins; otherwise RSTAB_THREADS, otherwise the hardware count.
int resolve_threads(int requested);

// Runs fn(i) for i in [0, n). Item i always runs on worker i % threads, and
// every item writes only its own outputs, so results never depend on the
// thread count. The first exception thrown by any worker is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace rstab
