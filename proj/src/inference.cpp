#include "futurist/inference.hpp"

#include "futurist/errors.hpp"

namespace futurist {

template <typename T>
LabelArray argmax_labels(const Matrix<T>& scores, int num_labels) {
  if (scores.cols() != static_cast<std::size_t>(num_labels)) throw ShapeError("score width != num_labels");
  LabelArray out(scores.rows(), num_labels);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const T* row = scores.row_ptr(r);
    int best = 0;
    for (int c = 1; c < num_labels; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out.set(r, static_cast<std::uint16_t>(best));
  }
  return out;
}

template <typename T>
SequenceRecord predict_next(const SequenceRecord& context, const Model<T>& model) {
  const ModelConfig& cfg = model.config();
  const TokenLayout& layout = cfg.layout;
  if (context.num_frames() != layout.context_frames) {
    throw ContractError("context has " + std::to_string(context.num_frames()) + " frames, the model expects " +
                        std::to_string(layout.context_frames));
  }
  const int stride = context.subsample > 0 ? context.subsample : cfg.subsample;
  const std::size_t frame_pixels = layout.pixels_per_frame();

  SequenceRecord full;
  full.city = context.city;
  full.sequence_id = context.sequence_id;
  full.subsample = stride;
  MaskSet masks;
  masks.ratio = 1.0;
  masks.scheduled_count = layout.future_tokens();
  for (const auto& spec : cfg.modalities) {
    const FrameSequence* src = nullptr;
    for (const auto& m : context.modalities) {
      if (m.modality.name == spec.name) src = &m;
    }
    if (!src) throw ContractError("context lacks modality " + spec.name);
    if (src->height != layout.height || src->width != layout.width) {
      throw ContractError("context frames are " + std::to_string(src->height) + "x" + std::to_string(src->width) +
                          ", the model expects " + std::to_string(layout.height) + "x" +
                          std::to_string(layout.width));
    }
    FrameSequence seq = *src;
    // placeholder future frames; their tokens are replaced by the mask embedding
    seq.labels.append(LabelArray(frame_pixels * layout.future_frames, spec.num_labels));
    for (int i = 1; i <= layout.future_frames; ++i) seq.frame_indices.push_back(src->frame_indices.back() + i * stride);
    full.modalities.push_back(std::move(seq));
    masks.per_modality[spec.name].assign(layout.future_tokens(), 1);
  }

  const auto logits = model.future_logits(Sample{&full, &masks});
  SequenceRecord out;
  out.city = context.city;
  out.sequence_id = context.sequence_id;
  out.subsample = stride;
  for (std::size_t k = 0; k < cfg.modalities.size(); ++k) {
    const ModalitySpec& spec = cfg.modalities[k];
    const LabelArray all = argmax_labels(logits[k], spec.num_labels);
    FrameSequence seq;
    seq.modality = full.modalities[k].modality;
    seq.height = layout.height;
    seq.width = layout.width;
    seq.labels = all.slice(0, frame_pixels);
    seq.frame_indices = {full.modalities[k].frame_indices[layout.context_frames]};
    out.modalities.push_back(std::move(seq));
  }
  return out;
}

template <typename T>
std::vector<SequenceRecord> rollout(const SequenceRecord& context, int steps, const Model<T>& model) {
  if (steps < 1) throw ContractError("rollout needs at least one step");
  std::vector<SequenceRecord> out;
  SequenceRecord window = context;
  for (int s = 0; s < steps; ++s) {
    SequenceRecord next = predict_next(window, model);
    if (s + 1 < steps) {
      SequenceRecord shifted = window.frames(1, window.num_frames() - 1);
      // modalities the model does not predict cannot advance
      std::erase_if(shifted.modalities, [&](const FrameSequence& m) {
        return model.config().find_modality(m.modality.name) == nullptr;
      });
      for (auto& m : shifted.modalities) {
        const FrameSequence& p = next.get(m.modality.name);
        m.labels.append(p.labels);
        m.frame_indices.push_back(p.frame_indices.front());
      }
      window = std::move(shifted);
    }
    out.push_back(std::move(next));
  }
  return out;
}

template LabelArray argmax_labels<float>(const Matrix<float>&, int);
template LabelArray argmax_labels<double>(const Matrix<double>&, int);
template SequenceRecord predict_next<float>(const SequenceRecord&, const Model<float>&);
template SequenceRecord predict_next<double>(const SequenceRecord&, const Model<double>&);
template std::vector<SequenceRecord> rollout<float>(const SequenceRecord&, int, const Model<float>&);
template std::vector<SequenceRecord> rollout<double>(const SequenceRecord&, int, const Model<double>&);

}  // namespace futurist
