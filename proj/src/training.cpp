#include "futurist/training.hpp"

#include <cmath>
#include <numeric>

#include "futurist/errors.hpp"
#include "futurist/masking.hpp"

namespace futurist {

namespace {

// derive_seed stream ids
constexpr std::uint64_t kEpochOrderStream = 1;
constexpr std::uint64_t kStepStream = 2;

std::int64_t steps_per_epoch(const ModelConfig& cfg, std::size_t num_clips) {
  const auto b = static_cast<std::size_t>(cfg.optimizer.batch_size);
  return static_cast<std::int64_t>((num_clips + b - 1) / b);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, kEpochOrderStream, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<std::string> modality_names(const ModelConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& m : cfg.modalities) names.push_back(m.name);
  return names;
}

}  // namespace

std::int64_t planned_steps(const ModelConfig& cfg, std::size_t num_clips, const TrainOptions& options) {
  if (options.total_steps > 0) return options.total_steps;
  return static_cast<std::int64_t>(cfg.optimizer.epochs) * steps_per_epoch(cfg, num_clips);
}

SequenceRecord strided_window(const SequenceRecord& clip, int start, int stride, int count) {
  if (start < 0 || stride < 1 || count < 1 || start + stride * (count - 1) >= clip.num_frames()) {
    throw RangeError("window of " + std::to_string(count) + " frames at stride " + std::to_string(stride) +
                     " from position " + std::to_string(start) + " does not fit a clip of " +
                     std::to_string(clip.num_frames()) + " frames");
  }
  SequenceRecord out;
  out.city = clip.city;
  out.sequence_id = clip.sequence_id;
  out.subsample = clip.subsample * stride;
  for (const auto& m : clip.modalities) {
    FrameSequence seq = m.frames(start, 1);
    for (int i = 1; i < count; ++i) {
      const FrameSequence next = m.frames(start + i * stride, 1);
      seq.labels.append(next.labels);
      seq.frame_indices.push_back(next.frame_indices.front());
    }
    out.modalities.push_back(std::move(seq));
  }
  return out;
}

StepBatch sample_step(const ModelConfig& cfg, std::span<const SequenceRecord> clips, std::int64_t step) {
  if (clips.empty()) throw ContractError("training needs at least one clip");
  const std::int64_t per_epoch = steps_per_epoch(cfg, clips.size());
  const std::int64_t epoch = step / per_epoch;
  const std::int64_t within = step % per_epoch;
  const auto order = epoch_order(cfg.seed, epoch, clips.size());
  Rng rng(derive_seed(cfg.seed, kStepStream, static_cast<std::uint64_t>(step)));
  const MaskSampler sampler(cfg.masking_strategy, cfg.schedule, cfg.layout.future_tokens(), modality_names(cfg), 0);
  const int span = cfg.subsample * (cfg.layout.frames - 1);
  StepBatch batch;
  for (int j = 0; j < cfg.optimizer.batch_size; ++j) {
    const auto& clip = clips[order[(static_cast<std::size_t>(within) * cfg.optimizer.batch_size + j) % clips.size()]];
    const int starts = clip.num_frames() - span;
    if (starts < 1) {
      throw ShapeError("clip " + clip.sequence_id + " has " + std::to_string(clip.num_frames()) +
                       " frames; a window needs " + std::to_string(span + 1));
    }
    const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(starts)));
    batch.windows.push_back(strided_window(clip, start, cfg.subsample, cfg.layout.frames));
    batch.masks.push_back(sampler.sample(rng));
  }
  return batch;
}

Checkpoint train(const ModelConfig& cfg, std::span<const SequenceRecord> clips, const TrainOptions& options,
                 const Checkpoint* resume) {
  if (clips.empty()) throw ContractError("training needs at least one clip");
  Checkpoint state = resume ? *resume : initial_checkpoint(cfg);
  if (!resume) state.total_steps = planned_steps(cfg, clips.size(), options);
  const ModelConfig& run_cfg = state.config;
  const std::int64_t per_epoch = steps_per_epoch(run_cfg, clips.size());

  auto params = state.model.parameters();
  Adam<float> adam(run_cfg.optimizer, params);
  adam.first_moments() = state.first_moments;
  adam.second_moments() = state.second_moments;
  adam.set_steps(state.step);

  const std::int64_t end =
      options.stop_after >= 0 ? std::min(state.total_steps, options.stop_after) : state.total_steps;
  while (state.step < end) {
    const StepBatch batch = sample_step(run_cfg, clips, state.step);
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < batch.windows.size(); ++i) samples.push_back({&batch.windows[i], &batch.masks[i]});

    state.model.zero_grad();
    StepLog log;
    log.loss = state.model.forward_backward(samples, true);
    if (!std::isfinite(log.loss.total)) {
      throw DivergenceError("non-finite loss at step " + std::to_string(state.step + 1));
    }
    log.grad_norm = gradient_norm<float>(params);
    if (!std::isfinite(log.grad_norm)) {
      throw DivergenceError("non-finite gradient at step " + std::to_string(state.step + 1));
    }
    if (run_cfg.optimizer.grad_clip > 0.0 && log.grad_norm > run_cfg.optimizer.grad_clip) {
      const auto scale = static_cast<float>(run_cfg.optimizer.grad_clip / log.grad_norm);
      for (auto* p : params) {
        for (auto& g : p->grad.flat()) g *= scale;
      }
    }
    log.learning_rate = cosine_learning_rate(run_cfg.optimizer.learning_rate, state.step, state.total_steps,
                                             run_cfg.optimizer.warmup_steps);
    adam.step(params, log.learning_rate);
    ++state.step;
    state.epoch = state.step / per_epoch;
    log.step = state.step;
    log.epoch = state.epoch;
    if (options.on_step) options.on_step(log);

    if (options.checkpoint_every > 0 && state.step % options.checkpoint_every == 0 && options.on_checkpoint) {
      state.first_moments = adam.first_moments();
      state.second_moments = adam.second_moments();
      state.rng_state = Rng(derive_seed(run_cfg.seed, kStepStream, static_cast<std::uint64_t>(state.step))).state();
      options.on_checkpoint(state);
    }
  }
  state.first_moments = adam.first_moments();
  state.second_moments = adam.second_moments();
  state.rng_state = Rng(derive_seed(run_cfg.seed, kStepStream, static_cast<std::uint64_t>(state.step))).state();
  for (auto* p : params) p->zero_grad();
  return state;
}

}  // namespace futurist
