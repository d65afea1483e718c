#pragma once

#include <functional>

namespace featsharp {

/// Worker cap: FEATSHARP_THREADS when set, otherwise hardware concurrency.
int max_threads();

/// Runs fn(i) for i in [begin, end) across up to max_threads() workers.
/// Work items must write to disjoint state; the split is deterministic but
/// the execution order is not, so results must not depend on ordering.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace featsharp
