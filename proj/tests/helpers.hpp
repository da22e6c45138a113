#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "futurist/core_types.hpp"
#include "futurist/datasets.hpp"
#include "futurist/rng.hpp"

namespace futurist::testing {

// Two modalities, N=2 (1 context + 1 future), 4×4 frames, P=2 (L=4), d=8, one block.
inline ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.layout = TokenLayout{2, 1, 1, 4, 4, 2};
  ModalitySpec seg{kSegmentation, 5, 3, 4, 1.0, {3, 4}};
  ModalitySpec depth{kDepth, 6, 3, 4, 1.0, {}};
  cfg.modalities = {seg, depth};
  cfg.hidden_dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.optimizer.batch_size = 2;
  cfg.seed = 7;
  return cfg;
}

inline FrameSequence random_frames(const ModalitySpec& spec, int frames, int height, int width, Rng& rng,
                                   int first_index = 0, int stride = 1) {
  FrameSequence seq;
  seq.modality = spec;
  seq.height = height;
  seq.width = width;
  seq.labels = LabelArray(static_cast<std::size_t>(frames) * height * width, spec.num_labels);
  for (std::size_t i = 0; i < seq.labels.size(); ++i) {
    seq.labels.set(i, static_cast<std::uint16_t>(rng.below(spec.num_labels)));
  }
  for (int f = 0; f < frames; ++f) seq.frame_indices.push_back(first_index + f * stride);
  return seq;
}

inline SequenceRecord random_record(const ModelConfig& cfg, Rng& rng, int frames = -1) {
  SequenceRecord r;
  r.city = "test";
  r.sequence_id = "0";
  r.subsample = cfg.subsample;
  const int n = frames < 0 ? cfg.layout.frames : frames;
  for (const auto& m : cfg.modalities) {
    r.modalities.push_back(random_frames(m, n, cfg.layout.height, cfg.layout.width, rng, 0, cfg.subsample));
  }
  return r;
}

inline LabelArray random_labels(std::size_t n, int num_labels, Rng& rng) {
  LabelArray a(n, num_labels);
  for (std::size_t i = 0; i < n; ++i) a.set(i, static_cast<std::uint16_t>(rng.below(num_labels)));
  return a;
}

inline LabelArray labels_of(const std::vector<int>& v, int num_labels) {
  LabelArray a(v.size(), num_labels);
  for (std::size_t i = 0; i < v.size(); ++i) a.set(i, static_cast<std::uint16_t>(v[i]));
  return a;
}

}  // namespace futurist::testing
