#pragma once

#include <string>
#include <vector>

#include "futurist/core_types.hpp"
#include "futurist/rng.hpp"

namespace futurist {

// ⌊γ(r)·total⌋ clamped to [1, total]; γ is the identity or cos(πr/2).
// Throws RangeError unless 0 < r < 1 and total >= 1.
int scheduled_count(double r, Schedule schedule, int total);

class MaskSampler {
 public:
  MaskSampler(MaskingStrategy strategy, Schedule schedule, int total_tokens, std::vector<std::string> modalities,
              std::uint64_t seed);

  MaskSet sample();
  // Same as sample() but draws from the caller's generator.
  MaskSet sample(Rng& rng) const;

  Rng& rng() { return rng_; }
  MaskingStrategy strategy() const { return strategy_; }
  int total_tokens() const { return total_; }

 private:
  MaskingStrategy strategy_;
  Schedule schedule_;
  int total_;
  std::vector<std::string> modalities_;
  Rng rng_;
};

// Uniformly random subset of exactly `count` positions out of `total`, as a 0/1 vector.
std::vector<std::uint8_t> random_subset(Rng& rng, int total, int count);

// Completes a common mask for the partially-shared + exclusive strategy: every position not in
// `common` is left visible in exactly one (uniformly chosen) modality and masked in the rest.
std::vector<std::vector<std::uint8_t>> exclusive_visibility(Rng& rng, const std::vector<std::uint8_t>& common,
                                                            int num_modalities);

}  // namespace futurist
