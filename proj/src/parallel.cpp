#include "sfsir/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace sfsir {

namespace {

std::size_t initial_thread_count() noexcept
{
  if (const char* env = std::getenv("SFSIR_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0)
        return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

std::atomic<std::size_t>& configured_threads() noexcept
{
  static std::atomic<std::size_t> n{ initial_thread_count() };
  return n;
}

thread_local bool inside_worker = false;

} // namespace

std::size_t thread_count() noexcept
{
  return configured_threads().load();
}

void set_thread_count(std::size_t n) noexcept
{
  configured_threads().store(n == 0 ? 1 : n);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body)
{
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1 || inside_worker) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end)
      break;
    pool.emplace_back([&, begin, end] {
      inside_worker = true;
      try {
        for (std::size_t i = begin; i < end; ++i)
          body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
      }
      inside_worker = false;
    });
  }
  pool.clear();
  if (failure)
    std::rethrow_exception(failure);
}

} // namespace sfsir
