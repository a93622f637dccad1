#pragma once

#include <cstddef>
#include <cstdlib>
#include <thread>
#include <vector>

namespace asmc {

/// Replicate concurrency cap: SMC_THREADS when set, hardware otherwise.
inline unsigned max_threads() {
  if (const char* env = std::getenv("SMC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

/// Runs fn(0..count-1) across at most max_threads() workers. Each index must
/// be independent; results observed after return are deterministic in the
/// index, so thread count never changes any output.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(max_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([count, workers, w, &fn] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace asmc
