#pragma once

// Random numbers. Dynamics noise comes from a counter-based generator so a
// Gaussian increment is a pure function of (seed, step, globule, slot);
// samplers use a sequential engine. Both avoid the implementation-defined
// std:: distributions so outputs only depend on the engine bits.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

namespace globules {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Per-trajectory (or per-chain) seed from a master seed and a stream index.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0xD1B54A32D192ED03ULL));
}

/// Uniform in (0, 1), never exactly 0 or 1.
constexpr double open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

class CounterNormal {
 public:
  explicit CounterNormal(std::uint64_t seed) noexcept : seed_(seed) {}

  /// Two independent standard normals keyed by (a, b, c).
  std::pair<double, double> pair(std::uint64_t a, std::uint64_t b, std::uint64_t c) const noexcept {
    std::uint64_t h = splitmix64(seed_ ^ splitmix64(a));
    h = splitmix64(h ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
    h = splitmix64(h ^ splitmix64(c + 0x85157AF5ULL));
    const double u1 = open_unit(h);
    const double u2 = open_unit(splitmix64(h));
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform() { return open_unit(engine_()); }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double rad = std::sqrt(-2.0 * std::log(uniform()));
    const double ang = 2.0 * std::numbers::pi * uniform();
    spare_ = rad * std::sin(ang);
    has_spare_ = true;
    return rad * std::cos(ang);
  }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace globules
