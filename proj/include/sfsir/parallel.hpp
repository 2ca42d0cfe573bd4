#pragma once

#include <cstddef>
#include <functional>

namespace sfsir {

//! Worker count used by parallel_for. Defaults to SFSIR_THREADS when set,
//! else the hardware concurrency.
std::size_t thread_count() noexcept;
void set_thread_count(std::size_t n) noexcept;

//! Runs body(i) for i in [0, n). Iterations are split into contiguous chunks
//! over worker threads; each index runs exactly once. Nested calls from inside
//! a worker run sequentially on that worker. The first exception thrown by
//! any iteration is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace sfsir
