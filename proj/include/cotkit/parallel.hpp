#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace cotkit {

// Applies fn to every index in [0, count) with at most `concurrency` workers.
// Results land at their input index, so output order never depends on
// scheduling. The lowest-index exception is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t count, int concurrency, Fn&& fn) {
  if (count == 0) return;
  if (concurrency < 1) concurrency = 1;
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(concurrency), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <class T, class Fn>
auto parallel_map(const std::vector<T>& items, int concurrency, Fn&& fn)
    -> std::vector<decltype(fn(items[0]))> {
  using R = decltype(fn(items[0]));
  std::vector<std::optional<R>> slots(items.size());
  parallel_for(items.size(), concurrency, [&](std::size_t i) { slots[i] = fn(items[i]); });
  std::vector<R> out;
  out.reserve(items.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace cotkit
