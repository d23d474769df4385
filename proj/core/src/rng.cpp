#include "kesten/rng.hpp"

#include <cmath>
#include <numbers>

namespace kesten {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix64(std::uint64_t x) {
  std::uint64_t s = x;
  return splitmix64(s);
}

std::uint64_t derive_key(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = mix64(master ^ 0x6a09e667f3bcc908ULL);
  for (std::uint64_t p : path) key = mix64(key ^ mix64(p + 0x3c6ef372fe94f82bULL));
  return key;
}

Stream::Stream(std::uint64_t seed) {
  std::uint64_t st = seed;
  for (auto& w : s_) w = splitmix64(st);
}

Stream Stream::derive(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Stream(derive_key(master, path));
}

double Stream::exponential() { return -std::log(uniform_pos()); }

double Stream::normal() {
  const double u1 = uniform_pos();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace kesten
