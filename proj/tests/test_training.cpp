#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "futurist/checkpoint.hpp"
#include "futurist/errors.hpp"
#include "futurist/training.hpp"
#include "helpers.hpp"

using namespace futurist;

namespace {

ModelConfig train_config() {
  ModelConfig cfg = testing::micro_config();
  cfg.subsample = 2;
  cfg.optimizer.learning_rate = 3e-3;
  cfg.optimizer.epochs = 2;
  return cfg;
}

std::vector<SequenceRecord> clips(const ModelConfig& cfg, int count = 5, std::uint64_t seed = 17,
                                  bool still = false) {
  Rng rng(seed);
  std::vector<SequenceRecord> out;
  for (int i = 0; i < count; ++i) {
    ModelConfig c = cfg;
    c.subsample = 1;
    SequenceRecord r = testing::random_record(c, rng, 7);
    r.sequence_id = std::to_string(i);
    if (still) {
      // every frame repeats the first one
      for (auto& m : r.modalities) {
        const LabelArray first = m.frames(0, 1).labels;
        LabelArray all(0, m.modality.num_labels);
        for (int f = 0; f < m.num_frames(); ++f) all.append(first);
        m.labels = all;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

bool same_parameters(const Model<float>& a, const Model<float>& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || !(pa[i]->value == pb[i]->value)) return false;
  }
  return true;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "futurist_training_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("zero epochs returns the initialization") {
  ModelConfig cfg = train_config();
  cfg.optimizer.epochs = 0;
  const auto data = clips(cfg);
  const Checkpoint out = train(cfg, data);
  CHECK(out.step == 0);
  CHECK(same_parameters(out.model, initial_checkpoint(cfg).model));
  CHECK_THROWS_AS(train(cfg, std::span<const SequenceRecord>{}), ContractError);
}

TEST_CASE("planned steps and windows") {
  const ModelConfig cfg = train_config();
  CHECK(planned_steps(cfg, 5, {}) == 2 * 3);
  TrainOptions o;
  o.total_steps = 40;
  CHECK(planned_steps(cfg, 5, o) == 40);

  const auto data = clips(cfg);
  const SequenceRecord w = strided_window(data[0], 1, 3, 2);
  CHECK(w.get(kSegmentation).frame_indices == std::vector<int>{1, 4});
  CHECK(w.subsample == 3);
  CHECK_THROWS_AS(strided_window(data[0], 1, 3, 3), RangeError);

  const StepBatch a = sample_step(cfg, data, 4);
  const StepBatch b = sample_step(cfg, data, 4);
  CHECK(a.windows == b.windows);
  CHECK(a.masks.size() == 2);
  CHECK(a.masks[0].per_modality == b.masks[0].per_modality);
}

TEST_CASE("training is deterministic and resuming reproduces the uninterrupted run") {
  const ModelConfig cfg = train_config();
  const auto data = clips(cfg);
  TrainOptions full;
  full.total_steps = 12;
  std::vector<double> reference;
  full.on_step = [&](const StepLog& s) { reference.push_back(s.loss.total); };
  const Checkpoint a = train(cfg, data, full);
  REQUIRE(reference.size() == 12);

  std::vector<double> again;
  TrainOptions repeat = full;
  repeat.on_step = [&](const StepLog& s) { again.push_back(s.loss.total); };
  CHECK(same_parameters(train(cfg, data, repeat).model, a.model));
  CHECK(again == reference);

  std::vector<double> resumed;
  TrainOptions first = full;
  first.stop_after = 5;
  first.on_step = [&](const StepLog& s) { resumed.push_back(s.loss.total); };
  const Checkpoint half = train(cfg, data, first);
  CHECK(half.step == 5);
  const Checkpoint reloaded = parse_checkpoint(serialize_checkpoint(half));
  TrainOptions second;
  second.on_step = first.on_step;
  const Checkpoint b = train(cfg, data, second, &reloaded);
  CHECK(b.step == 12);
  CHECK(resumed == reference);
  CHECK(same_parameters(a.model, b.model));
}

TEST_CASE("decoder projection stays tied to the embedding table") {
  const ModelConfig cfg = train_config();
  const auto data = clips(cfg);
  TrainOptions o;
  o.total_steps = 10;
  const Checkpoint c = train(cfg, data, o);
  const Checkpoint initial = initial_checkpoint(cfg);
  for (std::size_t k = 0; k < c.model.decoders.size(); ++k) {
    const auto& table = c.model.embedders[k].pixel_table.value;
    CHECK(&c.model.decoders[k].output_table() == &c.model.embedders[k].pixel_table);
    CHECK_FALSE(table == initial.model.embedders[k].pixel_table.value);
    for (std::size_t l = 0; l < table.rows(); ++l) {
      for (std::size_t ch = 0; ch < table.cols(); ++ch) {
        const float w = c.model.decoders[k].output_weight(static_cast<int>(ch), static_cast<int>(l));
        CHECK(std::memcmp(&w, &table(l, ch), sizeof(float)) == 0);
      }
    }
  }
}

TEST_CASE("checkpoint files round-trip byte for byte") {
  const ModelConfig cfg = train_config();
  const auto data = clips(cfg);
  TrainOptions o;
  o.total_steps = 3;
  const Checkpoint c = train(cfg, data, o);
  const auto path = scratch("a.ckpt");
  save_checkpoint(c, path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(same_parameters(loaded.model, c.model));
  CHECK(loaded.config == c.config);
  CHECK(loaded.step == 3);
  CHECK(loaded.first_moments == c.first_moments);
  CHECK(loaded.second_moments == c.second_moments);
  CHECK(loaded.rng_state == c.rng_state);
  const auto path2 = scratch("b.ckpt");
  save_checkpoint(loaded, path2);
  std::ifstream fa(path, std::ios::binary), fb(path2, std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)), {}), bb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(ba == bb);
  CHECK(ba == serialize_checkpoint(c));
  CHECK_THROWS_AS(load_checkpoint(scratch("missing.ckpt")), LoadError);
}

TEST_CASE("damaged checkpoints are rejected") {
  const Checkpoint c = initial_checkpoint(train_config());
  const std::string bytes = serialize_checkpoint(c);
  for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(parse_checkpoint(std::string_view(bytes).substr(0, cut)), CheckpointError);
  }
  std::string flipped = bytes;
  flipped[bytes.size() - 3] ^= 0x40;
  CHECK_THROWS_AS(parse_checkpoint(flipped), CheckpointError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad_magic), CheckpointError);

  std::string other_version = bytes;
  const auto at = other_version.find("\"version\":1");
  REQUIRE(at != std::string::npos);
  other_version[at + 10] = '2';
  try {
    parse_checkpoint(other_version);
    FAIL("version mismatch accepted");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("a non-finite loss aborts training") {
  const ModelConfig cfg = train_config();
  const auto data = clips(cfg);
  Checkpoint poisoned = initial_checkpoint(cfg);
  poisoned.total_steps = 4;
  poisoned.model.find_parameter("backbone.position_table")->value(0, 0) = NAN;
  CHECK_THROWS_AS(train(cfg, data, {}, &poisoned), DivergenceError);
}

TEST_CASE("loss goes down on a small fixed set") {
  ModelConfig cfg = train_config();
  const auto data = clips(cfg, 2, 5, true);
  TrainOptions o;
  o.total_steps = 300;
  std::vector<double> losses;
  o.on_step = [&](const StepLog& s) { losses.push_back(s.loss.total); };
  train(cfg, data, o);
  double head = 0, tail = 0;
  for (int i = 0; i < 30; ++i) {
    head += losses[i];
    tail += losses[losses.size() - 1 - i];
  }
  CHECK(tail < 0.8 * head);
}
