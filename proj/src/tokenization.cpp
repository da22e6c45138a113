#include "futurist/tokenization.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "futurist/errors.hpp"
#include "futurist/kernels.hpp"

namespace futurist {

using kernels::Op;

namespace {

template <typename T>
void init_normal(Matrix<T>& m, Rng& rng, double stddev) {
  for (auto& v : m.flat()) v = static_cast<T>(rng.normal() * stddev);
}

void check_item(const FrameSequence& seq, const ModalitySpec& spec, const TokenLayout& layout) {
  if (seq.num_frames() != layout.frames || seq.height != layout.height || seq.width != layout.width) {
    throw ShapeError("modality " + spec.name + ": frames " + std::to_string(seq.num_frames()) + "x" +
                     std::to_string(seq.height) + "x" + std::to_string(seq.width) + " do not match layout " +
                     std::to_string(layout.frames) + "x" + std::to_string(layout.height) + "x" +
                     std::to_string(layout.width));
  }
  if (seq.labels.size() != static_cast<std::size_t>(layout.frames) * layout.height * layout.width) {
    throw ShapeError("modality " + spec.name + ": label array size does not match its dimensions");
  }
}

}  // namespace

template <typename T>
ModalityEmbedder<T>::ModalityEmbedder(const ModalitySpec& s, int p, Rng& rng)
    : spec(s),
      patch(p),
      pixel_table(s.name + ".pixel_table", s.num_labels, s.pixel_embed_dim),
      patch_projection(s.name + ".patch_projection", static_cast<std::size_t>(p) * p * s.pixel_embed_dim,
                       s.token_embed_dim),
      patch_bias(s.name + ".patch_bias", 1, s.token_embed_dim),
      mask_embedding(s.name + ".mask_embedding", 1, s.token_embed_dim) {
  init_normal(pixel_table.value, rng, 0.02);
  init_normal(patch_projection.value, rng, 0.02);
}

template <typename T>
ModalityDecoder<T>::ModalityDecoder(ModalityEmbedder<T>& tied, int hidden_dim, Rng& rng)
    : head_projection(tied.spec.name + ".head_projection", hidden_dim, tied.flat_width()),
      head_bias(tied.spec.name + ".head_bias", 1, tied.flat_width()),
      tied_(&tied) {
  init_normal(head_projection.value, rng, 0.02);
}

std::size_t patch_pixel_offset(const TokenLayout& layout, int token, int pixel) {
  const int per_frame = layout.tokens_per_frame();
  const int frame = token / per_frame;
  const int within = token % per_frame;
  const int py = within / layout.patches_x();
  const int px = within % layout.patches_x();
  const int y = py * layout.patch + pixel / layout.patch;
  const int x = px * layout.patch + pixel % layout.patch;
  return (static_cast<std::size_t>(frame) * layout.height + y) * layout.width + x;
}

template <typename T>
void gather_patches(const ModalityEmbedder<T>& emb, std::span<const FrameSequence* const> items,
                    const TokenLayout& layout, Matrix<T>& flat) {
  const int tokens = layout.total_tokens();
  const int pixels = layout.pixels_per_patch();
  const int channels = emb.spec.pixel_embed_dim;
  const int labels = emb.spec.num_labels;
  if (emb.patch != layout.patch) throw ShapeError("embedder patch size does not match the layout");
  flat.resize(items.size() * tokens, static_cast<std::size_t>(pixels) * channels);
  for (std::size_t b = 0; b < items.size(); ++b) {
    const FrameSequence& seq = *items[b];
    check_item(seq, emb.spec, layout);
    for (int t = 0; t < tokens; ++t) {
      T* dst = flat.row_ptr(b * tokens + t);
      for (int q = 0; q < pixels; ++q) {
        const int label = seq.labels[patch_pixel_offset(layout, t, q)];
        if (label >= labels) {
          throw RangeError("label " + std::to_string(label) + " outside [0, " + std::to_string(labels) +
                           ") for modality " + emb.spec.name);
        }
        std::copy_n(emb.pixel_table.value.row_ptr(label), channels, dst + static_cast<std::size_t>(q) * channels);
      }
    }
  }
}

template <typename T>
void project_patches(const ModalityEmbedder<T>& emb, const Matrix<T>& flat, Matrix<T>& tokens) {
  const std::size_t d = emb.spec.token_embed_dim;
  if (flat.cols() != emb.patch_projection.value.rows()) throw ShapeError("flattened patch width mismatch");
  tokens.resize(flat.rows(), d);
  for (std::size_t r = 0; r < tokens.rows(); ++r) std::copy_n(emb.patch_bias.value.data(), d, tokens.row_ptr(r));
  kernels::gemm<T>(Op::kNone, Op::kNone, flat.rows(), d, flat.cols(), T{1}, flat.data(), flat.cols(),
                   emb.patch_projection.value.data(), d, T{1}, tokens.data(), d);
}

template <typename T>
Matrix<T> embed_modality(const FrameSequence& frames, const ModalityEmbedder<T>& emb, const TokenLayout& layout) {
  Matrix<T> flat;
  Matrix<T> tokens;
  const FrameSequence* items[] = {&frames};
  gather_patches<T>(emb, items, layout, flat);
  project_patches(emb, flat, tokens);
  return tokens;
}

template <typename T>
std::vector<std::size_t> apply_mask(Matrix<T>& tokens, std::span<const std::vector<std::uint8_t>* const> masks,
                                    const ModalityEmbedder<T>& emb, const TokenLayout& layout) {
  const std::size_t per_item = layout.total_tokens();
  const std::size_t future = layout.future_tokens();
  const std::size_t first_future = per_item - future;
  const std::size_t d = emb.spec.token_embed_dim;
  if (tokens.rows() != masks.size() * per_item || tokens.cols() != d) {
    throw ShapeError("token matrix does not cover all frames of every item");
  }
  std::vector<std::size_t> replaced;
  for (std::size_t b = 0; b < masks.size(); ++b) {
    const auto& mask = *masks[b];
    if (mask.size() != future) {
      throw ShapeError("mask length " + std::to_string(mask.size()) + " != N_p*L = " + std::to_string(future));
    }
    for (std::size_t j = 0; j < future; ++j) {
      if (!mask[j]) continue;
      const std::size_t row = b * per_item + first_future + j;
      std::copy_n(emb.mask_embedding.value.data(), d, tokens.row_ptr(row));
      replaced.push_back(row);
    }
  }
  return replaced;
}

template <typename T>
void apply_mask(Matrix<T>& tokens, const std::vector<std::uint8_t>& mask, const ModalityEmbedder<T>& emb,
                const TokenLayout& layout) {
  const std::vector<std::uint8_t>* masks[] = {&mask};
  apply_mask<T>(tokens, masks, emb, layout);
}

template <typename T>
Matrix<T> fuse(std::span<const Matrix<T>* const> tokens, Fusion mode, int hidden_dim) {
  if (tokens.empty()) throw ShapeError("fuse needs at least one modality");
  const std::size_t rows = tokens.front()->rows();
  std::size_t width_sum = 0;
  for (const auto* t : tokens) {
    if (t->rows() != rows) throw ShapeError("fused modalities must share the token count");
    if (mode == Fusion::kAdd && t->cols() != static_cast<std::size_t>(hidden_dim)) {
      throw ShapeError("ADD fusion requires every token width to equal hidden_dim");
    }
    width_sum += t->cols();
  }
  if (mode == Fusion::kConcat && width_sum != static_cast<std::size_t>(hidden_dim)) {
    throw ShapeError("CONCAT fusion requires token widths summing to hidden_dim");
  }
  Matrix<T> out(rows, hidden_dim);
  if (mode == Fusion::kConcat) {
    std::size_t offset = 0;
    for (const auto* t : tokens) {
      for (std::size_t r = 0; r < rows; ++r) std::copy_n(t->row_ptr(r), t->cols(), out.row_ptr(r) + offset);
      offset += t->cols();
    }
  } else {
    for (const auto* t : tokens) {
      const T* src = t->data();
      T* dst = out.data();
      for (std::size_t i = 0; i < out.size(); ++i) dst[i] += src[i];
    }
  }
  return out;
}

template <typename T>
Matrix<T> unfuse_grad(const Matrix<T>& d_fused, Fusion mode, std::span<const int> widths, std::size_t k) {
  if (mode == Fusion::kAdd) return d_fused;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < k; ++i) offset += widths[i];
  Matrix<T> out(d_fused.rows(), widths[k]);
  for (std::size_t r = 0; r < d_fused.rows(); ++r) std::copy_n(d_fused.row_ptr(r) + offset, widths[k], out.row_ptr(r));
  return out;
}

template <typename T>
void embed_backward(ModalityEmbedder<T>& emb, std::span<const FrameSequence* const> items, const TokenLayout& layout,
                    const Matrix<T>& flat, const Matrix<T>& d_tokens) {
  const std::size_t d = emb.spec.token_embed_dim;
  const std::size_t width = flat.cols();
  kernels::gemm<T>(Op::kTranspose, Op::kNone, width, d, flat.rows(), T{1}, flat.data(), width, d_tokens.data(), d, T{1},
                   emb.patch_projection.grad.data(), d);
  T* db = emb.patch_bias.grad.data();
  for (std::size_t r = 0; r < d_tokens.rows(); ++r) {
    const T* row = d_tokens.row_ptr(r);
    for (std::size_t c = 0; c < d; ++c) db[c] += row[c];
  }
  Matrix<T> d_flat(flat.rows(), width);
  kernels::gemm<T>(Op::kNone, Op::kTranspose, flat.rows(), width, d, T{1}, d_tokens.data(), d,
                   emb.patch_projection.value.data(), d, T{0}, d_flat.data(), width);
  const int tokens = layout.total_tokens();
  const int pixels = layout.pixels_per_patch();
  const int channels = emb.spec.pixel_embed_dim;
  for (std::size_t b = 0; b < items.size(); ++b) {
    const FrameSequence& seq = *items[b];
    for (int t = 0; t < tokens; ++t) {
      const T* src = d_flat.row_ptr(b * tokens + t);
      for (int q = 0; q < pixels; ++q) {
        const int label = seq.labels[patch_pixel_offset(layout, t, q)];
        T* g = emb.pixel_table.grad.row_ptr(label);
        const T* s = src + static_cast<std::size_t>(q) * channels;
        for (int c = 0; c < channels; ++c) g[c] += s[c];
      }
    }
  }
}

template <typename T>
void decode_hidden(const ModalityDecoder<T>& dec, const Matrix<T>& backbone_out, std::span<const std::size_t> rows,
                   Matrix<T>& hidden) {
  const std::size_t d = backbone_out.cols();
  const std::size_t width = dec.head_projection.value.cols();
  if (dec.head_projection.value.rows() != d) throw ShapeError("decoder head does not match the hidden dimension");
  Matrix<T> selected(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(backbone_out.row_ptr(rows[i]), d, selected.row_ptr(i));
  hidden.resize(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(dec.head_bias.value.data(), width, hidden.row_ptr(i));
  kernels::gemm<T>(Op::kNone, Op::kNone, rows.size(), width, d, T{1}, selected.data(), d,
                   dec.head_projection.value.data(), width, T{1}, hidden.data(), width);
}

template <typename T>
void token_logits(const ModalityDecoder<T>& dec, const T* hidden_row, int pixels, int channels, int labels,
                  T* logits) {
  // (P²×C) · tableᵀ with table num_labels×C
  kernels::gemm<T>(Op::kNone, Op::kTranspose, pixels, labels, channels, T{1}, hidden_row, channels,
                   dec.output_table().value.data(), channels, T{0}, logits, labels);
}

template <typename T>
void softmax_rows(Matrix<T>& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    T* row = m.row_ptr(r);
    const T mx = *std::max_element(row, row + m.cols());
    T sum{0};
    for (std::size_t c = 0; c < m.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const T inv = T{1} / sum;
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] *= inv;
  }
}

template <typename T>
Matrix<T> decode_logits(const Matrix<T>& backbone_out, const ModalityDecoder<T>& dec,
                        const ModalityEmbedder<T>& emb, const TokenLayout& layout) {
  const std::size_t tokens = layout.total_tokens();
  if (backbone_out.rows() != tokens) {
    throw ShapeError("backbone output has " + std::to_string(backbone_out.rows()) + " rows, expected N*L = " +
                     std::to_string(tokens));
  }
  const int pixels = layout.pixels_per_patch();
  const int channels = emb.spec.pixel_embed_dim;
  const int labels = emb.spec.num_labels;
  std::vector<std::size_t> rows(tokens);
  for (std::size_t i = 0; i < tokens; ++i) rows[i] = i;
  Matrix<T> hidden;
  decode_hidden(dec, backbone_out, rows, hidden);
  Matrix<T> out(static_cast<std::size_t>(layout.frames) * layout.pixels_per_frame(), labels);
  Matrix<T> logits(pixels, labels);
  for (std::size_t t = 0; t < tokens; ++t) {
    token_logits(dec, hidden.row_ptr(t), pixels, channels, labels, logits.data());
    for (int q = 0; q < pixels; ++q) {
      std::copy_n(logits.row_ptr(q), labels, out.row_ptr(patch_pixel_offset(layout, static_cast<int>(t), q)));
    }
  }
  return out;
}

template <typename T>
Matrix<T> decode_modality(const Matrix<T>& backbone_out, const ModalityDecoder<T>& dec,
                          const ModalityEmbedder<T>& emb, const TokenLayout& layout) {
  Matrix<T> out = decode_logits(backbone_out, dec, emb, layout);
  softmax_rows(out);
  return out;
}

#define FUTURIST_INSTANTIATE(T)                                                                                     \
  template struct ModalityEmbedder<T>;                                                                              \
  template class ModalityDecoder<T>;                                                                                \
  template void gather_patches<T>(const ModalityEmbedder<T>&, std::span<const FrameSequence* const>,               \
                                  const TokenLayout&, Matrix<T>&);                                                 \
  template void project_patches<T>(const ModalityEmbedder<T>&, const Matrix<T>&, Matrix<T>&);                      \
  template Matrix<T> embed_modality<T>(const FrameSequence&, const ModalityEmbedder<T>&, const TokenLayout&);      \
  template std::vector<std::size_t> apply_mask<T>(Matrix<T>&, std::span<const std::vector<std::uint8_t>* const>,   \
                                                  const ModalityEmbedder<T>&, const TokenLayout&);                 \
  template void apply_mask<T>(Matrix<T>&, const std::vector<std::uint8_t>&, const ModalityEmbedder<T>&,            \
                              const TokenLayout&);                                                                 \
  template Matrix<T> fuse<T>(std::span<const Matrix<T>* const>, Fusion, int);                                      \
  template Matrix<T> unfuse_grad<T>(const Matrix<T>&, Fusion, std::span<const int>, std::size_t);                  \
  template void embed_backward<T>(ModalityEmbedder<T>&, std::span<const FrameSequence* const>, const TokenLayout&, \
                                  const Matrix<T>&, const Matrix<T>&);                                             \
  template void decode_hidden<T>(const ModalityDecoder<T>&, const Matrix<T>&, std::span<const std::size_t>,        \
                                 Matrix<T>&);                                                                      \
  template void token_logits<T>(const ModalityDecoder<T>&, const T*, int, int, int, T*);                           \
  template void softmax_rows<T>(Matrix<T>&);                                                                       \
  template Matrix<T> decode_logits<T>(const Matrix<T>&, const ModalityDecoder<T>&, const ModalityEmbedder<T>&,     \
                                      const TokenLayout&);                                                         \
  template Matrix<T> decode_modality<T>(const Matrix<T>&, const ModalityDecoder<T>&, const ModalityEmbedder<T>&,   \
                                        const TokenLayout&);

FUTURIST_INSTANTIATE(float)
FUTURIST_INSTANTIATE(double)

#undef FUTURIST_INSTANTIATE

}  // namespace futurist
