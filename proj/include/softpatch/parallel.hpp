#pragma once

#include <cstddef>
#include <functional>

namespace softpatch {

/// Caps the number of worker threads used by parallel_for. 0 means hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for every i in [begin, end). Work is split into contiguous chunks; every index
/// is visited exactly once, so results written by index are deterministic regardless of the
/// thread count. The first exception thrown by any worker is rethrown on the calling thread.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body,
                  std::size_t min_chunk = 1);

}  // namespace softpatch
