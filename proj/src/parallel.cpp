#include "cbnn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace cbnn {

namespace {
std::atomic<int> g_threads{1};
thread_local bool t_inside_parallel = false;

struct ParallelScope {
  bool previous;
  ParallelScope() : previous(t_inside_parallel) { t_inside_parallel = true; }
  ~ParallelScope() { t_inside_parallel = previous; }
};
}  // namespace

void set_thread_count(int threads) { g_threads.store(std::max(1, threads)); }

int thread_count() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  // Nested calls run inline on the calling worker.
  if (workers <= 1 || t_inside_parallel) {
    if (n > 0) body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  auto run = [&](std::size_t w, std::size_t begin, std::size_t end) {
    try {
      ParallelScope scope;
      body(begin, end);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back(run, w, begin, end);
  }
  run(0, 0, std::min(n, chunk));
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace cbnn
