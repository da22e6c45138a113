#include <doctest.h>

#include <algorithm>
#include <set>

#include "futurist/errors.hpp"
#include "futurist/masking.hpp"

using namespace futurist;

namespace {

int ones(const std::vector<std::uint8_t>& v) { return static_cast<int>(std::count(v.begin(), v.end(), 1)); }

}  // namespace

TEST_CASE("scheduled_count examples") {
  CHECK(scheduled_count(0.5, Schedule::kIdentity, 512) == 256);
  CHECK(scheduled_count(std::nextafter(1.0, 0.0), Schedule::kCosine, 512) == 1);
  CHECK(scheduled_count(1.0 / 3.0, Schedule::kCosine, 512) == 443);
  CHECK(scheduled_count(1e-9, Schedule::kCosine, 512) == 512);  // cos rounds to 1.0
  CHECK(scheduled_count(0.01, Schedule::kCosine, 512) == 511);
  CHECK(scheduled_count(1e-9, Schedule::kIdentity, 512) == 1);
  CHECK_THROWS_AS(scheduled_count(0.0, Schedule::kCosine, 512), RangeError);
  CHECK_THROWS_AS(scheduled_count(1.0, Schedule::kCosine, 512), RangeError);
  CHECK_THROWS_AS(scheduled_count(0.5, Schedule::kCosine, 0), RangeError);
}

TEST_CASE("partially shared exclusive on a fixed common mask enumerates the legal assignments") {
  const std::vector<std::uint8_t> common = {1, 0, 0, 1};
  std::set<std::vector<std::vector<std::uint8_t>>> seen;
  Rng rng(9);
  for (int i = 0; i < 400; ++i) {
    const auto m = exclusive_visibility(rng, common, 2);
    seen.insert(m);
    for (int t : {0, 3}) {
      CHECK(m[0][t] == 1);
      CHECK(m[1][t] == 1);
    }
    for (int t : {1, 2}) CHECK(m[0][t] + m[1][t] == 1);
  }
  // tokens 1 and 2 each go to one of two modalities: exactly four outcomes
  CHECK(seen.size() == 4);
}

TEST_CASE("strategy properties over many draws") {
  const int T = 512;
  const std::vector<std::string> names = {"segmentation", "depth"};
  for (auto strategy : {MaskingStrategy::kFullyIndependentSameR, MaskingStrategy::kFullyIndependentDiffR,
                        MaskingStrategy::kFullyShared, MaskingStrategy::kPartiallySharedExclusive,
                        MaskingStrategy::kFullyMasked}) {
    MaskSampler sampler(strategy, Schedule::kCosine, T, names, 1234);
    int violations = 0;
    for (int i = 0; i < 2000; ++i) {
      const MaskSet m = sampler.sample();
      const auto& a = m.per_modality.at("segmentation");
      const auto& b = m.per_modality.at("depth");
      violations += a.size() != T || b.size() != T;
      switch (strategy) {
        case MaskingStrategy::kFullyMasked:
          violations += ones(a) != T || ones(b) != T;
          break;
        case MaskingStrategy::kFullyShared:
          violations += a != b || ones(a) != m.scheduled_count;
          break;
        case MaskingStrategy::kFullyIndependentSameR:
          violations += ones(a) != m.scheduled_count || ones(b) != m.scheduled_count;
          break;
        case MaskingStrategy::kFullyIndependentDiffR:
          violations += ones(a) != m.scheduled_count || ones(b) < 1;
          break;
        case MaskingStrategy::kPartiallySharedExclusive: {
          int common = 0;
          for (int t = 0; t < T; ++t) {
            const int s = a[t] + b[t];
            violations += s < 1;  // both visible is illegal
            common += s == 2;
          }
          // common mask M has exactly scheduled_count tokens; others are masked in exactly one
          violations += common != m.scheduled_count;
          break;
        }
      }
    }
    CHECK(violations == 0);
  }
}

TEST_CASE("identical rng state gives identical mask sets") {
  const std::vector<std::string> names = {"a", "b", "c"};
  MaskSampler s(MaskingStrategy::kPartiallySharedExclusive, Schedule::kCosine, 64, names, 5);
  Rng r1(77), r2(77);
  for (int i = 0; i < 50; ++i) {
    const MaskSet x = s.sample(r1);
    const MaskSet y = s.sample(r2);
    CHECK(x.per_modality == y.per_modality);
    CHECK(x.ratio == y.ratio);
  }
}

TEST_CASE("three-modality exclusive visibility leaves exactly one modality visible") {
  const std::vector<std::string> names = {"a", "b", "c"};
  MaskSampler s(MaskingStrategy::kPartiallySharedExclusive, Schedule::kIdentity, 100, names, 3);
  for (int i = 0; i < 500; ++i) {
    const MaskSet m = s.sample();
    for (int t = 0; t < 100; ++t) {
      const int total = m.per_modality.at("a")[t] + m.per_modality.at("b")[t] + m.per_modality.at("c")[t];
      CHECK((total == 3 || total == 2));
    }
  }
}
