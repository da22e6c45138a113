#pragma once

#include <vector>

#include "futurist/datasets.hpp"
#include "futurist/model.hpp"

namespace futurist {

// Per-pixel argmax; ties go to the smallest label.
template <typename T>
LabelArray argmax_labels(const Matrix<T>& scores, int num_labels);

// Predicts the frame after an N_c-frame context (all future tokens masked, one forward pass).
// Returns a one-frame record per modality, frame index = last context index + subsample.
// Throws ContractError when the context length or modalities do not match the model.
template <typename T>
SequenceRecord predict_next(const SequenceRecord& context, const Model<T>& model);

// `steps` predictions; after each one the window drops its oldest frame and appends the
// prediction for every modality at once.
template <typename T>
std::vector<SequenceRecord> rollout(const SequenceRecord& context, int steps, const Model<T>& model);

}  // namespace futurist
