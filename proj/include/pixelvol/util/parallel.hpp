#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pixelvol::util {

// Worker count: hardware concurrency capped by the PIXELVOL_THREADS env var.
inline int max_workers() {
  int hw = int(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("PIXELVOL_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0 && cap < hw) hw = cap;
  }
  return hw;
}

// Runs fn(i) for i in [0, n). Tasks may execute on any worker; callers that
// need determinism must write results into per-index slots and reduce in
// index order afterwards. Rethrows the first task exception.
template <class Fn>
void parallel_tasks(int n, Fn&& fn, int workers = 0) {
  if (workers <= 0) workers = max_workers();
  if (workers > n) workers = n;
  if (n <= 0) return;
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto body = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace pixelvol::util
