#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace symc {

// Process-wide cap on worker threads (the CLI's --threads). 0 means hardware concurrency.
void set_max_threads(std::size_t n);
[[nodiscard]] std::size_t max_threads();

// Runs fn(i) for i in [0, n) on up to max_threads() workers. The first
// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace symc
