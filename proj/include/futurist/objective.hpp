#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "futurist/core_types.hpp"
#include "futurist/tensor.hpp"

namespace futurist {

inline constexpr const char* kMeanPerMaskedPixel = "mean_per_masked_pixel";

struct LossBreakdown {
  std::vector<std::string> modalities;
  std::vector<double> loss;        // per modality, already normalized
  std::vector<double> masked_tokens;  // per modality; averaged over the batch
  double total = 0.0;              // Σ w·loss
  std::string normalization = kMeanPerMaskedPixel;
};

// Cross-entropy over the masked future tokens' pixels, divided by masked_count·P², per
// modality; total = Σ w·loss. `logits[k]` is (N·H·W) × num_labels for modalities[k]; only the
// last N_p frames are read. If `grad` is non-null it receives d(total)/d(logits), exactly zero
// outside masked future tokens. Throws ContractError on an empty mask, ShapeError on shapes.
template <typename T>
LossBreakdown masked_loss(std::span<const Matrix<T>> logits, std::span<const FrameSequence* const> targets,
                          const MaskSet& masks, const TokenLayout& layout, std::span<const ModalitySpec> modalities,
                          std::vector<Matrix<T>>* grad = nullptr);

// Cosine annealing from base to 0 over total_steps, after an optional linear warmup.
double cosine_learning_rate(double base, std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps = 0);

// Adam with bias correction. Moments are indexed like the parameter list they were built for.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const OptimizerConfig& cfg, std::span<Parameter<T>* const> params);

  // One update with the given learning rate; increments the step counter.
  void step(std::span<Parameter<T>* const> params, double learning_rate);

  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  std::vector<Matrix<T>>& first_moments() { return m_; }
  std::vector<Matrix<T>>& second_moments() { return v_; }
  const std::vector<Matrix<T>>& first_moments() const { return m_; }
  const std::vector<Matrix<T>>& second_moments() const { return v_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::int64_t steps_ = 0;
};

// Global L2 norm over all gradients.
template <typename T>
double gradient_norm(std::span<Parameter<T>* const> params);

}  // namespace futurist
