#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <mutex>
#include <thread>
#include <vector>

namespace kesten {

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix64(std::uint64_t x);

// Key derivation: a stream is a pure function of (master seed, path), so
// results never depend on which worker draws it.
std::uint64_t derive_key(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// xoshiro256** seeded from splitmix64.
class Stream {
 public:
  explicit Stream(std::uint64_t seed);
  static Stream derive(std::uint64_t master, std::initializer_list<std::uint64_t> path);

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0, 1)
  double uniform_pos() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }  // (0, 1]
  double exponential();
  double normal();

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

// Stream domains, one per consumer, so that different analyses on the same
// master seed never share draws.
namespace domain {
inline constexpr std::uint64_t contractivity = 0x10;
inline constexpr std::uint64_t spanning = 0x11;
inline constexpr std::uint64_t audit = 0x12;
inline constexpr std::uint64_t kappa_mc = 0x20;
inline constexpr std::uint64_t tilted_chain = 0x21;
inline constexpr std::uint64_t comparability = 0x22;
inline constexpr std::uint64_t sample_r = 0x30;
inline constexpr std::uint64_t sample_w = 0x31;
inline constexpr std::uint64_t pilot = 0x32;
inline constexpr std::uint64_t moment_decay = 0x33;
inline constexpr std::uint64_t fixed_point_p1 = 0x34;
inline constexpr std::uint64_t fixed_point_p2 = 0x35;
inline constexpr std::uint64_t coupling = 0x36;
inline constexpr std::uint64_t tail_ar = 0x40;
inline constexpr std::uint64_t c_formula = 0x41;
inline constexpr std::uint64_t lower_bound = 0x42;
inline constexpr std::uint64_t harness = 0x43;
}  // namespace domain

unsigned resolve_threads(unsigned requested);

// Runs body(i) for i in [0, count). Work is split in contiguous chunks;
// callers write into per-index slots so the result is thread-count free.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  threads = resolve_threads(threads);
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  if (threads > count) threads = static_cast<unsigned>(count);
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = lo + chunk < count ? lo + chunk : count;
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace kesten
