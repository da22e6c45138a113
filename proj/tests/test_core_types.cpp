#include <doctest.h>

#include <set>

#include "futurist/config_io.hpp"
#include "futurist/core_types.hpp"
#include "futurist/errors.hpp"
#include "helpers.hpp"

using namespace futurist;

TEST_CASE("token_index examples") {
  TokenLayout small{5, 4, 1, 64, 128, 16};
  CHECK(token_index(0, 0, 0, small) == 0);
  CHECK(token_index(2, 3, 7, small) == 2 * 32 + 3 * 8 + 7);
  CHECK(token_index(2, 3, 7, small) == 95);
  TokenLayout paper{5, 4, 1, 256, 512, 16};
  CHECK(paper.tokens_per_frame() == 512);
  CHECK(token_index(1, 0, 0, paper) == 512);
}

TEST_CASE("token_index is a bijection with an exact inverse") {
  for (const TokenLayout layout : {TokenLayout{3, 2, 1, 8, 12, 4}, TokenLayout{2, 1, 1, 4, 4, 2},
                                   TokenLayout{4, 3, 1, 16, 8, 2}}) {
    std::set<int> seen;
    for (int f = 0; f < layout.frames; ++f) {
      for (int r = 0; r < layout.patches_y(); ++r) {
        for (int c = 0; c < layout.patches_x(); ++c) {
          const int idx = token_index(f, r, c, layout);
          CHECK(idx >= 0);
          CHECK(idx < layout.total_tokens());
          seen.insert(idx);
          CHECK(token_coord(idx, layout) == TokenCoord{f, r, c});
        }
      }
    }
    CHECK(seen.size() == static_cast<std::size_t>(layout.total_tokens()));
  }
}

TEST_CASE("token_index rejects out-of-range coordinates") {
  TokenLayout l{5, 4, 1, 64, 128, 16};
  CHECK_THROWS_AS(token_index(5, 0, 0, l), RangeError);
  CHECK_THROWS_AS(token_index(0, 4, 0, l), RangeError);
  CHECK_THROWS_AS(token_index(0, 0, 8, l), RangeError);
  CHECK_THROWS_AS(token_index(-1, 0, 0, l), RangeError);
  CHECK_THROWS_AS(token_coord(l.total_tokens(), l), RangeError);
}

TEST_CASE("validate_config examples") {
  ModelConfig big = desk_config();
  big.hidden_dim = 1536;
  big.num_heads = 16;
  big.modalities = {segmentation_modality(768), depth_modality(768)};
  CHECK(validate_config(big).empty());

  ModelConfig add = desk_config();
  add.fusion = Fusion::kAdd;
  add.modalities = {segmentation_modality(128), depth_modality(128)};
  CHECK(validate_config(add).empty());

  ModelConfig bad = big;
  bad.modalities = {segmentation_modality(700), depth_modality(700)};
  const auto v = validate_config(bad);
  REQUIRE(v.size() == 1);
  CHECK(v[0].field == "hidden_dim");
  CHECK(v[0].constraint.find("CONCAT") != std::string::npos);
}

TEST_CASE("validate_config accepts the shipped configs and rejects single mutations") {
  CHECK(validate_config(desk_config()).empty());
  CHECK(validate_config(testing::micro_config()).empty());

  auto count = [](auto mutate) {
    ModelConfig c = desk_config();
    mutate(c);
    return validate_config(c).size();
  };
  CHECK(count([](ModelConfig& c) { c.num_heads = 3; }) == 1);
  CHECK(count([](ModelConfig& c) { c.layout.context_frames = 3; }) == 1);
  CHECK(count([](ModelConfig& c) { c.layout.height = 60; }) == 1);
  CHECK(count([](ModelConfig& c) { c.layout.width = 100; }) == 1);
  CHECK(count([](ModelConfig& c) { c.modalities[1].num_labels = 1; }) == 1);
  CHECK(count([](ModelConfig& c) { c.modalities[0].pixel_embed_dim = 0; }) == 1);
  CHECK(count([](ModelConfig& c) { c.modalities[1].loss_weight = -1.0; }) == 1);
  CHECK(count([](ModelConfig& c) { c.modalities[0].movable_label_ids.push_back(19); }) == 1);
  CHECK(count([](ModelConfig& c) { c.fusion = Fusion::kAdd; }) >= 1);
}

TEST_CASE("config text round-trips bit for bit") {
  ModelConfig c = desk_config();
  c.optimizer.learning_rate = 0.1 + 0.2;  // not exactly representable in short decimal
  c.modalities[1].loss_weight = 1.0 / 3.0;
  c.masking_strategy = MaskingStrategy::kFullyIndependentDiffR;
  c.schedule = Schedule::kIdentity;
  c.seed = 18446744073709551615ull;
  const std::string text = serialize_config(c);
  const ModelConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(serialize_config(back) == text);
}

TEST_CASE("config parser reports unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config("no_such_key = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("hidden_dim = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("fusion = SIDEWAYS\n"), ConfigError);
  const ModelConfig c = parse_config("# comment\nhidden_dim = 256  # trailing\nfusion = ADD\n");
  CHECK(c.hidden_dim == 256);
  CHECK(c.fusion == Fusion::kAdd);
}

TEST_CASE("label arrays pick the narrowest width") {
  CHECK_FALSE(LabelArray(4, 19).wide());
  CHECK_FALSE(LabelArray(4, 256).wide());
  CHECK(LabelArray(4, 257).wide());
  LabelArray a(3, 1000);
  a.set(2, 999);
  CHECK(a[2] == 999);
}

TEST_CASE("frame sequences validate labels and frame strides") {
  Rng rng(1);
  FrameSequence s = testing::random_frames(segmentation_modality(64), 3, 4, 4, rng, 2, 3);
  CHECK_NOTHROW(check_frame_sequence(s));
  s.frame_indices = {2, 5, 9};
  CHECK_THROWS(check_frame_sequence(s));
  s.frame_indices = {2, 5, 8};
  s.labels.set(0, 19);
  CHECK_THROWS_AS(check_frame_sequence(s), RangeError);
  s.labels.set(0, kIgnoreLabel);
  CHECK_THROWS_AS(check_frame_sequence(s), RangeError);
  CHECK_NOTHROW(check_frame_sequence(s, true));
}
