#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>

namespace aoifwd {

// Nanoseconds on the experiment clock. Zero is the run origin.
using timestamp_ns = std::int64_t;
using user_id = std::uint32_t;

enum class PacketType : std::uint8_t { Control = 0, Data = 1 };

constexpr char to_char(PacketType t) noexcept {
  return t == PacketType::Control ? 'C' : 'D';
}

// A location update (Control) or app update (Data).
struct Packet {
  PacketType ptype = PacketType::Data;
  user_id user = 0;
  std::uint64_t seq = 0;   // trace position
  timestamp_ns gen_ts = 0; // shared batch timestamp, set at admission
  std::optional<timestamp_ns> fib_ts; // set by the FIB lookup (data only)
  timestamp_ns wire_ts = 0;           // when the packet entered its current link
};

// FIB value. next_hop stands in for a MAC address.
struct AddressTuple {
  std::uint64_t next_hop = 0;
  timestamp_ns loc_ts = 0;

  friend bool operator==(const AddressTuple&, const AddressTuple&) = default;
};

// Experiment clock. Monotonic mode reads steady_clock relative to an origin;
// Virtual mode only moves when the simulator advances it.
class Clock {
 public:
  enum class Mode : std::uint8_t { Monotonic, Virtual };

  static Clock monotonic() { return Clock(Mode::Monotonic); }
  static Clock virtual_clock() { return Clock(Mode::Virtual); }

  Clock(const Clock& other)
      : mode_(other.mode_),
        origin_(other.origin_),
        virtual_now_(other.virtual_now_.load(std::memory_order_relaxed)) {}

  Mode mode() const noexcept { return mode_; }

  // Re-anchor the monotonic origin so that now() == 0 at this instant.
  void reset_origin() noexcept {
    origin_ = std::chrono::steady_clock::now();
    virtual_now_.store(0, std::memory_order_relaxed);
  }

  timestamp_ns now() const noexcept {
    if (mode_ == Mode::Virtual) return virtual_now_.load(std::memory_order_acquire);
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - origin_)
        .count();
  }

  // Virtual mode only. Time never moves backwards.
  void advance_to(timestamp_ns t) {
    if (mode_ != Mode::Virtual)
      throw std::logic_error("advance_to on a monotonic clock");
    auto cur = virtual_now_.load(std::memory_order_relaxed);
    if (t < cur) throw std::logic_error("virtual clock cannot move backwards");
    virtual_now_.store(t, std::memory_order_release);
  }

 private:
  explicit Clock(Mode m) : mode_(m), origin_(std::chrono::steady_clock::now()) {}

  Mode mode_;
  std::chrono::steady_clock::time_point origin_;
  std::atomic<timestamp_ns> virtual_now_{0};
};

// Raised when a run-time invariant (conservation, classification contract)
// does not hold.
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace aoifwd
