#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>

namespace probdr {

// Seeded random stream with platform-independent output. Only the 64-bit
// Mersenne Twister engine from the standard library is used; every
// distribution is implemented here because std:: distributions are
// implementation-defined. Single owner: do not share across threads.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  static std::string algorithm() { return "mt19937_64"; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  bool bernoulli(double p);
  // Gamma(shape, scale) via Marsaglia-Tsang.
  double gamma(double shape, double scale);

  // Independent stream for worker `stream`, derived from this stream's seed.
  SeededRng derive(std::uint64_t stream) const;

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace probdr
