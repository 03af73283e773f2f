#pragma once
// Deterministic RNG.  mt19937_64 has standard-specified output, but the
// std:: distributions do not, so uniform/normal are derived here by hand:
// uniform takes the top 53 bits, normal is Box-Muller.  Same seed, same
// stream, on every platform.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace condflow {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1]; Box-Muller needs log() of a nonzero value
  double uniform_pos() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // modulo bias is irrelevant at our n (shuffles over <= millions of items)
    return eng_() % n;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace condflow
