#pragma once

#include <chrono>
#include <cstdint>
#include <thread>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#endif

namespace aoifwd {

inline void cpu_relax() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  _mm_pause();
#elif defined(__aarch64__)
  asm volatile("yield");
#endif
}

// Spin `spin_limit` times, then yield on every further call. A spin limit of
// zero yields immediately, which is what an oversubscribed core wants.
class Backoff {
 public:
  explicit Backoff(int spin_limit = 64) noexcept : limit_(spin_limit) {}

  void pause() noexcept {
    if (count_ < limit_) {
      ++count_;
      cpu_relax();
    } else {
      std::this_thread::yield();
    }
  }
  void reset() noexcept { count_ = 0; }

 private:
  int limit_;
  int count_ = 0;
};

// Holds the caller for `ns` of wall time. Stands in for critical-section work
// whose cost is a configuration parameter.
inline void dwell_for(std::int64_t ns, int spin_limit) noexcept {
  if (ns <= 0) return;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::nanoseconds(ns);
  Backoff b(spin_limit);
  while (std::chrono::steady_clock::now() < deadline) b.pause();
}

}  // namespace aoifwd
