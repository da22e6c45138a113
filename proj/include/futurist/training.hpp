#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "futurist/checkpoint.hpp"
#include "futurist/datasets.hpp"
#include "futurist/objective.hpp"

namespace futurist {

struct StepLog {
  std::int64_t step = 0;  // 1-based index of the step just taken
  std::int64_t epoch = 0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;
  LossBreakdown loss;
};

struct TrainOptions {
  // 0 means cfg.optimizer.epochs × ceil(clips / batch_size).
  std::int64_t total_steps = 0;
  // Stop once this many steps are done without changing the schedule; -1 runs to the end.
  std::int64_t stop_after = -1;
  std::int64_t checkpoint_every = 0;
  std::function<void(const StepLog&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

std::int64_t planned_steps(const ModelConfig& cfg, std::size_t num_clips, const TrainOptions& options);

// `count` frames of a clip starting at position `start`, every `stride`-th frame.
SequenceRecord strided_window(const SequenceRecord& clip, int start, int stride, int count);

// Windows and masks of one step; a pure function of (cfg.seed, step, clip set).
struct StepBatch {
  std::vector<SequenceRecord> windows;
  std::vector<MaskSet> masks;
};
StepBatch sample_step(const ModelConfig& cfg, std::span<const SequenceRecord> clips, std::int64_t step);

// Runs the masked-modeling loop from `resume` (or a fresh model) up to the planned step count.
// Throws DivergenceError on a non-finite loss, ContractError on an empty dataset.
Checkpoint train(const ModelConfig& cfg, std::span<const SequenceRecord> clips, const TrainOptions& options = {},
                 const Checkpoint* resume = nullptr);

}  // namespace futurist
