#include "futurist/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "futurist/errors.hpp"

namespace futurist {

int scheduled_count(double r, Schedule schedule, int total) {
  if (!(r > 0.0 && r < 1.0)) throw RangeError("masking ratio must lie in the open interval (0, 1)");
  if (total < 1) throw RangeError("token count must be >= 1");
  const double gamma = schedule == Schedule::kIdentity ? r : std::cos(std::numbers::pi * r / 2.0);
  const auto raw = static_cast<long long>(std::floor(gamma * total));
  return static_cast<int>(std::clamp<long long>(raw, 1, total));
}

std::vector<std::uint8_t> random_subset(Rng& rng, int total, int count) {
  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates over the first `count` slots
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(total - i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::uint8_t> mask(total, 0);
  for (int i = 0; i < count; ++i) mask[idx[i]] = 1;
  return mask;
}

std::vector<std::vector<std::uint8_t>> exclusive_visibility(Rng& rng, const std::vector<std::uint8_t>& common,
                                                            int num_modalities) {
  std::vector<std::vector<std::uint8_t>> out(num_modalities, common);
  for (std::size_t t = 0; t < common.size(); ++t) {
    if (common[t]) continue;
    const auto visible = rng.below(static_cast<std::uint64_t>(num_modalities));
    for (int k = 0; k < num_modalities; ++k) out[k][t] = static_cast<std::uint8_t>(k != static_cast<int>(visible));
  }
  return out;
}

MaskSampler::MaskSampler(MaskingStrategy strategy, Schedule schedule, int total_tokens,
                         std::vector<std::string> modalities, std::uint64_t seed)
    : strategy_(strategy), schedule_(schedule), total_(total_tokens), modalities_(std::move(modalities)), rng_(seed) {
  if (total_ < 1) throw RangeError("mask sampler needs at least one future token");
}

MaskSet MaskSampler::sample() { return sample(rng_); }

MaskSet MaskSampler::sample(Rng& rng) const {
  MaskSet out;
  const int k = static_cast<int>(modalities_.size());
  switch (strategy_) {
    case MaskingStrategy::kFullyMasked:
      out.ratio = 1.0;
      out.scheduled_count = total_;
      for (const auto& name : modalities_) out.per_modality[name].assign(total_, 1);
      break;
    case MaskingStrategy::kFullyShared: {
      out.ratio = rng.uniform_open();
      out.scheduled_count = scheduled_count(out.ratio, schedule_, total_);
      const auto mask = random_subset(rng, total_, out.scheduled_count);
      for (const auto& name : modalities_) out.per_modality[name] = mask;
      break;
    }
    case MaskingStrategy::kFullyIndependentSameR:
      out.ratio = rng.uniform_open();
      out.scheduled_count = scheduled_count(out.ratio, schedule_, total_);
      for (const auto& name : modalities_) out.per_modality[name] = random_subset(rng, total_, out.scheduled_count);
      break;
    case MaskingStrategy::kFullyIndependentDiffR:
      // ratio/scheduled_count report the first modality's draw
      for (std::size_t i = 0; i < modalities_.size(); ++i) {
        const double r = rng.uniform_open();
        const int count = scheduled_count(r, schedule_, total_);
        if (i == 0) {
          out.ratio = r;
          out.scheduled_count = count;
        }
        out.per_modality[modalities_[i]] = random_subset(rng, total_, count);
      }
      break;
    case MaskingStrategy::kPartiallySharedExclusive: {
      out.ratio = rng.uniform_open();
      out.scheduled_count = scheduled_count(out.ratio, schedule_, total_);
      const auto common = random_subset(rng, total_, out.scheduled_count);
      if (k == 1) {
        out.per_modality[modalities_.front()] = common;
        break;
      }
      auto masks = exclusive_visibility(rng, common, k);
      for (int i = 0; i < k; ++i) out.per_modality[modalities_[i]] = std::move(masks[i]);
      break;
    }
  }
  return out;
}

}  // namespace futurist
