#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <type_traits>
#include <vector>

namespace forge {

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

/// Applies `fn` to every item with at most `workers` calls in flight and
/// returns results in input order. The first exception thrown by any call
/// stops further dispatch and is rethrown once all workers have joined.
template <class T, class F>
auto ordered_parallel_map(std::span<const T> items, std::size_t workers, F&& fn)
    -> std::vector<std::invoke_result_t<F&, const T&>> {
  using R = std::invoke_result_t<F&, const T&>;
  std::vector<std::optional<R>> slots(items.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(items.size(), 1));

  if (workers == 1) {
    std::vector<R> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(fn(item));
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (!failed.load(std::memory_order_relaxed)) {
          std::size_t i = next.fetch_add(1);
          if (i >= items.size()) return;
          try {
            slots[i].emplace(fn(items[i]));
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);

  std::vector<R> out;
  out.reserve(items.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

template <class T, class F>
auto ordered_parallel_map(const std::vector<T>& items, std::size_t workers, F&& fn) {
  return ordered_parallel_map(std::span<const T>(items), workers, std::forward<F>(fn));
}

/// Token-bucket limiter. A rate of zero or less disables limiting.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;

  explicit TokenBucket(double rate_per_second, double burst = 0.0)
      : rate_(rate_per_second),
        capacity_(burst > 0.0 ? burst : std::max(1.0, rate_per_second)),
        tokens_(capacity_),
        last_(Clock::now()) {}

  /// Blocks until one token is available.
  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

  double rate() const { return rate_; }

 private:
  void refill() {
    auto now = Clock::now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
  }

  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mu_;
};

}  // namespace forge
