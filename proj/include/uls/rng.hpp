#pragma once

#include <cstdint>
#include <random>

namespace uls {

// Seed-deterministic generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; normals come from Box-Muller and
// bounded integers from rejection sampling, so a given seed produces the
// same stream with any conforming standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (0, 1).
  double uniform();

  // Standard normal draw.
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// Mixes a base seed with a sequence of stream indices (splitmix64). Used to
// give every grid point / trial its own independent, order-free stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0,
                          std::uint64_t d = 0);

}  // namespace uls
