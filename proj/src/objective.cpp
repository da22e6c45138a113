#include "futurist/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "futurist/errors.hpp"
#include "futurist/kernels.hpp"
#include "futurist/tokenization.hpp"

namespace futurist {

template <typename T>
LossBreakdown masked_loss(std::span<const Matrix<T>> logits, std::span<const FrameSequence* const> targets,
                          const MaskSet& masks, const TokenLayout& layout, std::span<const ModalitySpec> modalities,
                          std::vector<Matrix<T>>* grad) {
  if (logits.size() != modalities.size() || targets.size() != modalities.size()) {
    throw ShapeError("masked_loss needs one logit matrix and one target per modality");
  }
  const std::size_t frame_pixels = layout.pixels_per_frame();
  const std::size_t all_pixels = frame_pixels * layout.frames;
  const int pixels = layout.pixels_per_patch();
  const int context_tokens = layout.context_frames * layout.tokens_per_frame();

  LossBreakdown out;
  if (grad) grad->assign(modalities.size(), Matrix<T>{});
  for (std::size_t k = 0; k < modalities.size(); ++k) {
    const ModalitySpec& spec = modalities[k];
    const Matrix<T>& lg = logits[k];
    const FrameSequence& target = *targets[k];
    if (lg.rows() != all_pixels || lg.cols() != static_cast<std::size_t>(spec.num_labels)) {
      throw ShapeError("predictions for " + spec.name + " must be N*H*W x num_labels");
    }
    if (target.labels.size() != all_pixels) throw ShapeError("targets for " + spec.name + " must cover all N frames");
    const auto it = masks.per_modality.find(spec.name);
    if (it == masks.per_modality.end()) throw ContractError("no mask for modality " + spec.name);
    const auto& mask = it->second;
    if (mask.size() != static_cast<std::size_t>(layout.future_tokens())) throw ShapeError("mask length != N_p*L");
    const auto count = std::count(mask.begin(), mask.end(), std::uint8_t{1});
    if (count == 0) throw ContractError("empty mask for modality " + spec.name);

    const double norm = static_cast<double>(count) * pixels;
    if (grad) (*grad)[k].reset(lg.rows(), lg.cols());
    double sum = 0.0;
    std::vector<double> prob(spec.num_labels);
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (!mask[j]) continue;
      const int token = context_tokens + static_cast<int>(j);
      for (int q = 0; q < pixels; ++q) {
        const std::size_t px = patch_pixel_offset(layout, token, q);
        const T* row = lg.row_ptr(px);
        const int label = target.labels[px];
        if (label >= spec.num_labels) throw RangeError("target label out of range for " + spec.name);
        double mx = row[0];
        for (int c = 1; c < spec.num_labels; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double z = 0.0;
        for (int c = 0; c < spec.num_labels; ++c) {
          prob[c] = std::exp(static_cast<double>(row[c]) - mx);
          z += prob[c];
        }
        sum += std::log(z) + mx - static_cast<double>(row[label]);
        if (grad) {
          T* g = (*grad)[k].row_ptr(px);
          const double coef = spec.loss_weight / norm;
          for (int c = 0; c < spec.num_labels; ++c) {
            g[c] = static_cast<T>((prob[c] / z - (c == label ? 1.0 : 0.0)) * coef);
          }
        }
      }
    }
    out.modalities.push_back(spec.name);
    out.loss.push_back(sum / norm);
    out.masked_tokens.push_back(static_cast<double>(count));
    out.total += spec.loss_weight * out.loss.back();
  }
  return out;
}

double cosine_learning_rate(double base, std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps) {
  if (warmup_steps > 0 && step < warmup_steps) return base * static_cast<double>(step + 1) / warmup_steps;
  const std::int64_t span = std::max<std::int64_t>(1, total_steps - warmup_steps);
  const double progress = std::clamp(static_cast<double>(step - warmup_steps) / span, 0.0, 1.0);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
Adam<T>::Adam(const OptimizerConfig& cfg, std::span<Parameter<T>* const> params) : cfg_(cfg) {
  for (const auto* p : params) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

template <typename T>
void Adam<T>::step(std::span<Parameter<T>* const> params, double learning_rate) {
  if (params.size() != m_.size()) throw ContractError("optimizer built for a different parameter list");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const kernels::AdamStep<T> s{static_cast<T>(learning_rate),
                               static_cast<T>(cfg_.beta1),
                               static_cast<T>(cfg_.beta2),
                               static_cast<T>(cfg_.epsilon),
                               static_cast<T>(1.0 - std::pow(cfg_.beta1, t)),
                               static_cast<T>(1.0 - std::pow(cfg_.beta2, t))};
  const auto& k = kernels::active<T>();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (p.value.size() != m_[i].size()) throw ContractError("optimizer moment shape mismatch for " + p.name);
    k.adam(p.value.size(), p.value.data(), p.grad.data(), m_[i].data(), v_[i].data(), s);
  }
}

template <typename T>
double gradient_norm(std::span<Parameter<T>* const> params) {
  double sum = 0.0;
  for (const auto* p : params) {
    for (const T g : p->grad.flat()) sum += static_cast<double>(g) * g;
  }
  return std::sqrt(sum);
}

template LossBreakdown masked_loss<float>(std::span<const Matrix<float>>, std::span<const FrameSequence* const>,
                                          const MaskSet&, const TokenLayout&, std::span<const ModalitySpec>,
                                          std::vector<Matrix<float>>*);
template LossBreakdown masked_loss<double>(std::span<const Matrix<double>>, std::span<const FrameSequence* const>,
                                           const MaskSet&, const TokenLayout&, std::span<const ModalitySpec>,
                                           std::vector<Matrix<double>>*);
template class Adam<float>;
template class Adam<double>;
template double gradient_norm<float>(std::span<Parameter<float>* const>);
template double gradient_norm<double>(std::span<Parameter<double>* const>);

}  // namespace futurist
