#include "julesz/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace julesz {

namespace {

std::size_t threads_from_env() {
  const char* raw = std::getenv("JULESZ_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    return static_cast<std::size_t>(std::stoul(raw));
  } catch (const std::exception&) {
    return 0;
  }
}

std::atomic<std::size_t>& configured() {
  static std::atomic<std::size_t> value{threads_from_env()};
  return value;
}

}  // namespace

std::size_t thread_count() { return configured().load(); }
void set_thread_count(std::size_t n) { configured().store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace julesz
