#ifndef MFCZ_RANDOM_HPP
#define MFCZ_RANDOM_HPP

#include <cmath>
#include <cstdint>

namespace mfcz {

/// SplitMix64 finaliser. Used both as a generator step and as the seed-splitting hash.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for item `index` of stream `stream` under a root seed.
/// Every random draw in the library goes through this, so results never depend on evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) noexcept
{
  return mix64(mix64(root ^ mix64(stream + 0x632be59bd9b4e019ULL)) + index);
}

/// Small platform-independent generator (std distributions differ between standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept
  {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next() % n; }

  /// Standard normal via Box-Muller.
  double normal() noexcept
  {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace mfcz

#endif  // MFCZ_RANDOM_HPP
