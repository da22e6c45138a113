#include <doctest.h>

#include <cmath>
#include <numbers>

#include "futurist/errors.hpp"
#include "futurist/masking.hpp"
#include "futurist/model.hpp"
#include "futurist/objective.hpp"
#include "helpers.hpp"

using namespace futurist;

namespace {

struct LossCase {
  TokenLayout layout;
  std::vector<ModalitySpec> specs;
  std::vector<FrameSequence> targets;
  std::vector<Matrix<double>> logits;
  MaskSet masks;

  std::vector<const FrameSequence*> target_ptrs() const {
    std::vector<const FrameSequence*> out;
    for (const auto& t : targets) out.push_back(&t);
    return out;
  }
  LossBreakdown run(std::vector<Matrix<double>>* grad = nullptr) const {
    const auto ptrs = target_ptrs();
    return masked_loss<double>(logits, ptrs, masks, layout, specs, grad);
  }
};

LossCase make_case(Rng& rng, int labels = 19) {
  LossCase c;
  c.layout = TokenLayout{3, 2, 1, 4, 6, 2};
  c.specs = {ModalitySpec{"a", labels, 3, 4, 1.0, {}}, ModalitySpec{"b", 7, 3, 4, 0.5, {}}};
  const int pixels = 3 * 4 * 6;
  for (const auto& s : c.specs) {
    c.targets.push_back(testing::random_frames(s, 3, 4, 6, rng));
    Matrix<double> lg(pixels, s.num_labels);
    for (auto& v : lg.flat()) v = 2.0 * rng.normal();
    c.logits.push_back(std::move(lg));
    c.masks.per_modality[s.name] = random_subset(rng, c.layout.future_tokens(), 1 + rng.below(5));
  }
  return c;
}

bool pixel_is_masked(const LossCase& c, std::size_t k, std::size_t pixel) {
  const TokenLayout& l = c.layout;
  const int frame = static_cast<int>(pixel / l.pixels_per_frame());
  if (frame < l.context_frames) return false;
  const int y = static_cast<int>(pixel % l.pixels_per_frame()) / l.width;
  const int x = static_cast<int>(pixel % l.width);
  const int token = (frame - l.context_frames) * l.tokens_per_frame() + (y / l.patch) * l.patches_x() + x / l.patch;
  return c.masks.per_modality.at(c.specs[k].name)[token] != 0;
}

}  // namespace

TEST_CASE("uniform predictions over 19 labels cost ln 19") {
  Rng rng(1);
  LossCase c = make_case(rng);
  for (auto& lg : c.logits) lg.fill(0.0);
  const LossBreakdown b = c.run();
  CHECK(std::abs(b.loss[0] - std::log(19.0)) < 1e-6);
  CHECK(std::abs(b.loss[1] - std::log(7.0)) < 1e-6);
  CHECK(b.total == doctest::Approx(1.0 * b.loss[0] + 0.5 * b.loss[1]));
  CHECK(b.normalization == "mean_per_masked_pixel");
}

TEST_CASE("confident correct predictions cost nothing") {
  Rng rng(2);
  LossCase c = make_case(rng);
  for (std::size_t k = 0; k < c.specs.size(); ++k) {
    c.logits[k].fill(0.0);
    for (std::size_t p = 0; p < c.logits[k].rows(); ++p) c.logits[k](p, c.targets[k].labels[p]) = 30.0;
  }
  const LossBreakdown b = c.run();
  CHECK(b.loss[0] < 1e-6);
  CHECK(b.loss[1] < 1e-6);
}

TEST_CASE("gradient is exactly zero outside masked future tokens and matches differences inside") {
  Rng rng(3);
  const LossCase c = make_case(rng);
  std::vector<Matrix<double>> grad;
  const double base = c.run(&grad).total;
  (void)base;
  for (std::size_t k = 0; k < c.specs.size(); ++k) {
    for (std::size_t p = 0; p < grad[k].rows(); ++p) {
      if (pixel_is_masked(c, k, p)) continue;
      for (std::size_t l = 0; l < grad[k].cols(); ++l) CHECK(grad[k](p, l) == 0.0);
    }
  }
  LossCase probe = c;
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t k = 0; k < c.specs.size(); ++k) {
    for (std::size_t i = 0; i < probe.logits[k].size(); i += 3) {
      double& v = probe.logits[k].data()[i];
      const double keep = v;
      v = keep + h;
      const double up = probe.run().total;
      v = keep - h;
      const double down = probe.run().total;
      v = keep;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - grad[k].data()[i]));
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("a single 2x2 token over 3 labels matches a hand computation") {
  LossCase c;
  c.layout = TokenLayout{2, 1, 1, 2, 2, 2};
  c.specs = {ModalitySpec{"m", 3, 2, 2, 1.0, {}}};
  FrameSequence t;
  t.modality = c.specs[0];
  t.height = 2;
  t.width = 2;
  t.labels = testing::labels_of({0, 0, 0, 0, 2, 1, 0, 2}, 3);
  t.frame_indices = {0, 1};
  c.targets = {t};
  Matrix<double> lg(8, 3);
  const double values[8][3] = {{9, 9, 9},  {9, 9, 9},     {9, 9, 9},    {9, 9, 9},
                               {0, 1, 2},  {0.5, -1, 3}, {-2, 0, 0},  {1, 1, 1}};
  for (int r = 0; r < 8; ++r) {
    for (int l = 0; l < 3; ++l) lg(r, l) = values[r][l];
  }
  c.logits = {lg};
  c.masks.per_modality["m"] = {1};
  double expected = 0;
  for (int r = 4; r < 8; ++r) {
    const double z = std::exp(values[r][0]) + std::exp(values[r][1]) + std::exp(values[r][2]);
    expected += -std::log(std::exp(values[r][t.labels[r]]) / z);
  }
  expected /= 1.0 * 4;
  const LossBreakdown b = c.run();
  CHECK(b.loss[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(b.masked_tokens[0] == 1.0);

  c.masks.per_modality["m"] = {0};
  CHECK_THROWS_AS(c.run(), ContractError);
}

TEST_CASE("raising the correct-class logit never raises the loss") {
  Rng rng(5);
  LossCase c = make_case(rng);
  double previous = c.run().total;
  for (int round = 0; round < 20; ++round) {
    for (std::size_t k = 0; k < c.specs.size(); ++k) {
      for (std::size_t p = 0; p < c.logits[k].rows(); ++p) c.logits[k](p, c.targets[k].labels[p]) += 0.25;
    }
    const double now = c.run().total;
    CHECK(now <= previous);
    previous = now;
  }
}

TEST_CASE("cosine learning rate") {
  CHECK(cosine_learning_rate(1.6e-4, 0, 100) == doctest::Approx(1.6e-4));
  CHECK(cosine_learning_rate(1.6e-4, 50, 100) == doctest::Approx(0.8e-4));
  CHECK(cosine_learning_rate(1.6e-4, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_learning_rate(1.0, 25, 100) == doctest::Approx(0.5 * (1 + std::cos(std::numbers::pi / 4))));
  CHECK(cosine_learning_rate(1.0, 0, 110, 10) == doctest::Approx(0.1));
  CHECK(cosine_learning_rate(1.0, 10, 110, 10) == doctest::Approx(1.0));
  CHECK(cosine_learning_rate(1.0, 60, 110, 10) == doctest::Approx(0.5));
}

TEST_CASE("Adam follows the bias-corrected update") {
  OptimizerConfig cfg;
  Parameter<double> p("p", 1, 3);
  p.value(0, 0) = 1.0;
  p.value(0, 1) = -2.0;
  Parameter<double>* params[] = {&p};
  Adam<double> adam(cfg, params);
  std::vector<double> m(3, 0.0), v(3, 0.0), w = {1.0, -2.0, 0.0};
  const double grads[2][3] = {{0.5, -1.0, 0.0}, {-0.25, 2.0, 1e-3}};
  for (int t = 1; t <= 2; ++t) {
    for (int i = 0; i < 3; ++i) {
      p.grad(0, i) = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.99 * v[i] + 0.01 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.99, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + cfg.epsilon);
    }
    adam.step(params, 0.01);
    for (int i = 0; i < 3; ++i) CHECK(p.value(0, i) == doctest::Approx(w[i]).epsilon(1e-12));
  }
  CHECK(adam.steps() == 2);
}

namespace {

struct MicroBatch {
  std::vector<SequenceRecord> records;
  std::vector<MaskSet> masks;
  std::vector<Sample> samples;
};

MicroBatch micro_batch(const ModelConfig& cfg, Rng& rng, int items = 2) {
  MicroBatch b;
  MaskSampler sampler(MaskingStrategy::kPartiallySharedExclusive, Schedule::kCosine, cfg.layout.future_tokens(),
                      {kSegmentation, kDepth}, 99);
  for (int i = 0; i < items; ++i) {
    b.records.push_back(testing::random_record(cfg, rng));
    b.masks.push_back(sampler.sample());
  }
  for (int i = 0; i < items; ++i) b.samples.push_back(Sample{&b.records[i], &b.masks[i]});
  return b;
}

void randomize(Model<double>& model, Rng& rng) {
  for (auto* p : model.parameters()) {
    for (auto& v : p->value.flat()) v += 0.3 * rng.normal();
  }
}

}  // namespace

TEST_CASE("fused training loss equals masked_loss over full logits") {
  const ModelConfig cfg = testing::micro_config();
  Model<double> model(cfg);
  Rng rng(8);
  randomize(model, rng);
  MicroBatch b = micro_batch(cfg, rng);
  const LossBreakdown fused = model.forward_backward(b.samples, false);
  double expected = 0;
  for (const Sample& s : b.samples) {
    const auto lg = model.logits(s);
    std::vector<const FrameSequence*> targets;
    for (const auto& m : cfg.modalities) targets.push_back(&s.record->get(m.name));
    expected += masked_loss<double>(lg, targets, *s.masks, cfg.layout, cfg.modalities).total;
  }
  expected /= static_cast<double>(b.samples.size());
  CHECK(fused.total == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("end-to-end gradients match finite differences on the micro model") {
  for (Fusion fusion : {Fusion::kConcat, Fusion::kAdd}) {
    ModelConfig cfg = testing::micro_config();
    cfg.fusion = fusion;
    if (fusion == Fusion::kAdd) {
      cfg.modalities[0].token_embed_dim = 8;
      cfg.modalities[1].token_embed_dim = 8;
    }
    Model<double> model(cfg);
    Rng rng(12);
    randomize(model, rng);
    MicroBatch b = micro_batch(cfg, rng);
    model.zero_grad();
    model.forward_backward(b.samples, true);
    const double h = 1e-4;
    double worst = 0;
    std::string worst_name;
    for (auto* p : model.parameters()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        double& v = p->value.data()[i];
        const double keep = v;
        v = keep + h;
        const double up = model.forward_backward(b.samples, false).total;
        v = keep - h;
        const double down = model.forward_backward(b.samples, false).total;
        v = keep;
        const double numeric = (up - down) / (2 * h);
        const double analytic = p->grad.data()[i];
        const double err = std::abs(numeric - analytic) / std::max(1e-3, std::abs(numeric) + std::abs(analytic));
        if (err > worst) {
          worst = err;
          worst_name = p->name;
        }
      }
    }
    INFO(worst_name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zero depth weight leaves the depth head without gradient") {
  ModelConfig cfg = testing::micro_config();
  cfg.modalities[1].loss_weight = 0.0;
  Model<double> model(cfg);
  Rng rng(4);
  randomize(model, rng);
  MicroBatch b = micro_batch(cfg, rng);
  model.zero_grad();
  model.forward_backward(b.samples, true);
  for (const char* name : {"depth.head_projection", "depth.head_bias"}) {
    for (double g : model.find_parameter(name)->grad.flat()) CHECK(g == 0.0);
  }
  double embed = 0;
  for (double g : model.find_parameter("depth.patch_projection")->grad.flat()) embed += std::abs(g);
  CHECK(embed > 0.0);
}

TEST_CASE("visible depth tokens influence segmentation predictions") {
  const ModelConfig cfg = testing::micro_config();
  Model<double> model(cfg);
  Rng rng(6);
  randomize(model, rng);
  SequenceRecord rec = testing::random_record(cfg, rng);
  MaskSet masks;
  masks.per_modality[kSegmentation].assign(cfg.layout.future_tokens(), 1);
  masks.per_modality[kDepth].assign(cfg.layout.future_tokens(), 1);
  const auto before = model.future_logits(Sample{&rec, &masks});
  // change one pixel of the depth context frame
  FrameSequence& depth = rec.get(kDepth);
  depth.labels.set(5, static_cast<std::uint16_t>((depth.labels[5] + 1) % 6));
  const auto after = model.future_logits(Sample{&rec, &masks});
  double change = 0;
  for (std::size_t i = 0; i < before[0].size(); ++i) change += std::abs(before[0].data()[i] - after[0].data()[i]);
  CHECK(change > 0.0);
}
