#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace goldisim {

// Worker cap: GOLDISIM_THREADS (0 or unset = hardware concurrency).
inline int worker_count() {
  int n = 0;
  if (const char* env = std::getenv("GOLDISIM_THREADS")) {
    try {
      n = std::stoi(env);
    } catch (...) {
      n = 0;
    }
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  return n;
}

// Index-parallel loop; each index writes only its own output slot, so results
// are identical to sequential execution.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([w, workers, n, &fn]() {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace goldisim
