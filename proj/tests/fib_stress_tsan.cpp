// FIB stress under ThreadSanitizer. Exit status 0 when clean; TSan itself
// exits 66 on the first report.

#include <atomic>
#include <cstdio>
#include <thread>

#include <aoifwd/fib.hpp>

using namespace aoifwd;

namespace {

int rcu_one_writer_one_reader(int ops) {
  FibOptions o;
  o.spin_limit = 0;
  RcuFib fib(16, o);
  std::atomic<bool> stop{false};
  std::uint64_t reads = 0;
  std::thread reader([&] {
    auto r = fib.make_reader();
    while (!stop.load(std::memory_order_relaxed)) {
      r.read(static_cast<user_id>(reads % 16));
      ++reads;
    }
  });
  for (int i = 1; i <= ops; ++i) {
    fib.write(static_cast<user_id>(i % 16), i);
    if (i % 8 == 0) fib.synchronize();
  }
  stop = true;
  reader.join();
  fib.synchronize();
  std::printf("rcu: writes=%d reads=%llu integrity_failures=%llu reader_waits=%llu retired=%zu\n", ops,
              static_cast<unsigned long long>(reads),
              static_cast<unsigned long long>(fib.integrity_failures()),
              static_cast<unsigned long long>(fib.reader_waits()), fib.retired_count());
  return fib.integrity_failures() == 0 && fib.reader_waits() == 0 && fib.retired_count() == 0 ? 0 : 1;
}

int rwl_one_writer_two_readers(int ops) {
  FibOptions o;
  o.spin_limit = 0;
  RwlFib fib(16, o);
  std::atomic<bool> stop{false};
  auto body = [&] {
    auto r = fib.make_reader();
    for (std::uint64_t i = 0; !stop.load(std::memory_order_relaxed); ++i) r.read(static_cast<user_id>(i % 16));
  };
  std::thread r1(body), r2(body);
  for (int i = 1; i <= ops; ++i) fib.write(static_cast<user_id>(i % 16), i);
  stop = true;
  r1.join();
  r2.join();
  std::printf("rwl: writes=%d overlaps=%llu integrity_failures=%llu\n", ops,
              static_cast<unsigned long long>(fib.overlaps()),
              static_cast<unsigned long long>(fib.integrity_failures()));
  return fib.overlaps() == 0 && fib.integrity_failures() == 0 ? 0 : 1;
}

}  // namespace

int main() {
  int rc = rcu_one_writer_one_reader(200000);
  rc |= rwl_one_writer_two_readers(100000);
  std::printf("%s\n", rc == 0 ? "clean" : "FAILED");
  return rc;
}
