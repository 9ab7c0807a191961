#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace varlab {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based random stream. A stream is identified by (seed, a, b);
/// draw k of the stream is a pure function of (key, k), so ensembles keyed
/// by (seed, path index, component) are reproducible independent of
/// evaluation order and thread count.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t k = detail::mix64(seed + 0x9e3779b97f4a7c15ULL);
    k = detail::mix64(k ^ (a + 0xd1b54a32d192ed03ULL));
    k = detail::mix64(k ^ (b + 0x8cb92ba72f3d8dd7ULL));
    key_ = k;
  }

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return detail::mix64(key_ ^ counter_);
  }

  /// Uniform on (0,1), never exactly 0 or 1.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; draws two uniforms per pair.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace varlab
