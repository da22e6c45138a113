#include <doctest.h>

#include "futurist/errors.hpp"
#include "futurist/inference.hpp"
#include "futurist/training.hpp"
#include "helpers.hpp"

using namespace futurist;

namespace {

ModelConfig inference_config() {
  ModelConfig cfg = testing::micro_config();
  cfg.layout = TokenLayout{3, 2, 1, 4, 4, 2};
  cfg.subsample = 3;
  return cfg;
}

SequenceRecord context_of(const ModelConfig& cfg, Rng& rng) {
  return testing::random_record(cfg, rng, cfg.layout.context_frames);
}

Model<float> random_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model<float> m(cfg);
  Rng rng(seed);
  for (auto* p : m.parameters()) {
    for (auto& v : p->value.flat()) v += static_cast<float>(0.5 * rng.normal());
  }
  return m;
}

}  // namespace

TEST_CASE("predict_next returns one in-range frame per modality at the next index") {
  const ModelConfig cfg = inference_config();
  const Model<float> model = random_model(cfg, 1);
  Rng rng(2);
  const SequenceRecord ctx = context_of(cfg, rng);
  const SequenceRecord out = predict_next(ctx, model);
  REQUIRE(out.modalities.size() == 2);
  for (const auto& m : out.modalities) {
    CHECK(m.num_frames() == 1);
    CHECK(m.height == 4);
    CHECK(m.width == 4);
    CHECK(m.frame_indices == std::vector<int>{ctx.modalities[0].frame_indices.back() + 3});
    for (std::size_t i = 0; i < m.labels.size(); ++i) CHECK(m.labels[i] < m.modality.num_labels);
  }
  CHECK(predict_next(ctx, model) == out);
}

TEST_CASE("a zeroed decoder predicts label 0 everywhere") {
  const ModelConfig cfg = inference_config();
  Model<float> model = random_model(cfg, 3);
  for (auto& d : model.decoders) {
    d.head_projection.value.fill(0.0f);
    d.head_bias.value.fill(0.0f);
  }
  Rng rng(4);
  const SequenceRecord out = predict_next(context_of(cfg, rng), model);
  for (const auto& m : out.modalities) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) CHECK(m.labels[i] == 0);
  }
}

TEST_CASE("rollout prefixes agree, the context is untouched and modalities advance together") {
  const ModelConfig cfg = inference_config();
  const Model<float> model = random_model(cfg, 5);
  Rng rng(6);
  const SequenceRecord ctx = context_of(cfg, rng);
  const SequenceRecord copy = ctx;
  const auto longest = rollout(ctx, 16, model);
  CHECK(ctx == copy);
  REQUIRE(longest.size() == 16);
  for (int j = 1; j <= 16; ++j) {
    const auto shorter = rollout(ctx, j, model);
    for (int i = 0; i < j; ++i) CHECK(shorter[i] == longest[i]);
  }
  CHECK(rollout(ctx, 1, model)[0] == predict_next(ctx, model));
  for (int s = 0; s < 16; ++s) {
    CHECK(longest[s].modalities[0].frame_indices.front() == ctx.modalities[0].frame_indices.back() + 3 * (s + 1));
  }

  // step 2 sees both modalities' step-1 predictions
  SequenceRecord window = ctx.frames(1, 1);
  for (auto& m : window.modalities) {
    const FrameSequence& p = longest[0].get(m.modality.name);
    m.labels.append(p.labels);
    m.frame_indices.push_back(p.frame_indices.front());
  }
  CHECK(predict_next(window, model) == longest[1]);
  CHECK_THROWS_AS(rollout(ctx, 0, model), ContractError);
}

TEST_CASE("malformed contexts are contract errors") {
  const ModelConfig cfg = inference_config();
  const Model<float> model = random_model(cfg, 7);
  Rng rng(8);
  CHECK_THROWS_AS(predict_next(testing::random_record(cfg, rng, 3), model), ContractError);
  CHECK_THROWS_AS(predict_next(testing::random_record(cfg, rng, 1), model), ContractError);
  SequenceRecord missing = context_of(cfg, rng);
  missing.modalities.pop_back();
  CHECK_THROWS_AS(predict_next(missing, model), ContractError);
  ModelConfig wide = cfg;
  wide.layout.width = 6;
  CHECK_THROWS_AS(predict_next(testing::random_record(wide, rng, 2), model), ContractError);
}

TEST_CASE("a model fit to static scenes predicts the last context frame") {
  ModelConfig cfg = inference_config();
  cfg.subsample = 1;
  cfg.hidden_dim = 16;
  cfg.modalities[0].token_embed_dim = 8;
  cfg.modalities[1].token_embed_dim = 8;
  cfg.optimizer.learning_rate = 1e-2;
  cfg.optimizer.batch_size = 2;
  Rng rng(9);
  std::vector<SequenceRecord> data;
  for (int i = 0; i < 2; ++i) {
    SequenceRecord r = testing::random_record(cfg, rng, 1);
    for (auto& m : r.modalities) {
      const LabelArray first = m.labels;
      for (int f = 1; f < 4; ++f) {
        m.labels.append(first);
        m.frame_indices.push_back(f);
      }
    }
    data.push_back(std::move(r));
  }
  TrainOptions o;
  o.total_steps = 600;
  const Checkpoint c = train(cfg, data, o);
  for (const auto& clip : data) {
    const SequenceRecord ctx = clip.frames(0, 2);
    const SequenceRecord out = predict_next(ctx, c.model);
    for (const auto& m : out.modalities) CHECK(m.labels == ctx.get(m.modality.name).frames(1, 1).labels);
  }
}
