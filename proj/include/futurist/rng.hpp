#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace futurist {

// mt19937_64 with distribution mappings defined here rather than by the standard library,
// so draws are identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // Uniform on the open interval (0, 1); endpoint draws are rejected.
  double uniform_open();
  // Uniform integer in [0, n); n > 0. Unbiased via rejection.
  std::uint64_t below(std::uint64_t n);
  double normal();

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with stream identifiers into an independent seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace futurist
