#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace assimlab {

/// Runs fn(i) for i in [0, count) on `workers` threads. Results are delivered to
/// on_done(i, result) strictly in index order on the calling thread, so output
/// written from on_done does not depend on the worker count.
template <class R>
void ordered_parallel_for(std::size_t count, std::size_t workers, const std::function<R(std::size_t)>& fn,
                          const std::function<void(std::size_t, R&)>& on_done) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      R r = fn(i);
      on_done(i, r);
    }
    return;
  }
  std::vector<std::optional<R>> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      std::optional<R> r;
      std::exception_ptr e;
      try {
        r.emplace(fn(i));
      } catch (...) {
        e = std::current_exception();
      }
      {
        std::lock_guard lock(mu);
        results[i] = std::move(r);
        errors[i] = e;
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < std::min(workers, count); ++k) pool.emplace_back(work);
  std::exception_ptr first_error;
  for (std::size_t i = 0; i < count; ++i) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return results[i].has_value() || errors[i]; });
    if (errors[i]) {
      if (!first_error) first_error = errors[i];
      continue;
    }
    R r = std::move(*results[i]);
    results[i].reset();
    lock.unlock();
    if (!first_error) on_done(i, r);
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace assimlab
