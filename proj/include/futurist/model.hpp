#pragma once

#include <span>
#include <vector>

#include "futurist/backbone.hpp"
#include "futurist/core_types.hpp"
#include "futurist/datasets.hpp"
#include "futurist/objective.hpp"
#include "futurist/tokenization.hpp"

namespace futurist {

// One training/inference item: N frames per modality plus its future-token masks.
struct Sample {
  const SequenceRecord* record = nullptr;
  const MaskSet* masks = nullptr;
};

// Embedders, backbone and tied decoders for every modality of a config.
template <typename T>
class Model {
 public:
  Model() = default;
  // Parameters drawn from cfg.seed.
  explicit Model(const ModelConfig& cfg);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&& other) noexcept;
  Model& operator=(Model&& other) noexcept;

  const ModelConfig& config() const { return config_; }

  // Stable order: per modality embedder fields, backbone, per modality decoder head.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  Parameter<T>* find_parameter(const std::string& name);
  void zero_grad();

  // Embed, mask and fuse a batch; (batch·N·L) × d.
  Matrix<T> fused_input(std::span<const Sample> batch) const;

  // Backbone output for one item. Throws ShapeError/RangeError on malformed input.
  Matrix<T> encode(const Sample& item, SublayerMask mask = {}) const;

  // Raw logits over every pixel of all N frames, per modality in config order.
  std::vector<Matrix<T>> logits(const Sample& item, SublayerMask mask = {}) const;

  // Logits of the N_p future frames only ((N_p·H·W) × num_labels per modality).
  std::vector<Matrix<T>> future_logits(const Sample& item) const;

  // Masked loss of a batch (mean over items). With `accumulate_grad`, gradients are added to
  // every parameter's grad (call zero_grad first).
  LossBreakdown forward_backward(std::span<const Sample> batch, bool accumulate_grad, SublayerMask mask = {});

  std::vector<ModalityEmbedder<T>> embedders;
  std::vector<ModalityDecoder<T>> decoders;
  Backbone<T> backbone;

 private:
  void retie();

  ModelConfig config_;
};

}  // namespace futurist
