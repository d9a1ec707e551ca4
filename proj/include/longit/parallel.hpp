#pragma once

#include <cstddef>
#include <functional>

namespace longit {

/// Worker count: LONGIT_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
[[nodiscard]] std::size_t thread_count();

/// Runs body(i) for i in [0, n) across up to thread_count() threads. Each
/// index runs exactly once; the exception of the lowest failing index is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace longit
