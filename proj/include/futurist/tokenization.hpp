#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "futurist/core_types.hpp"
#include "futurist/rng.hpp"
#include "futurist/tensor.hpp"

namespace futurist {

// Two-stage embedder for one modality: per-pixel table lookup (num_labels × C), then a
// linear projection of each flattened P×P patch ((P²·C) × d_I, plus bias).
template <typename T>
struct ModalityEmbedder {
  ModalitySpec spec;
  int patch = 16;
  Parameter<T> pixel_table;       // num_labels × C
  Parameter<T> patch_projection;  // (P²·C) × d_I
  Parameter<T> patch_bias;        // 1 × d_I
  Parameter<T> mask_embedding;    // 1 × d_I

  ModalityEmbedder() = default;
  // Tables and projection ~ N(0, 0.02²); bias and mask embedding zero.
  ModalityEmbedder(const ModalitySpec& spec, int patch, Rng& rng);

  int flat_width() const { return patch * patch * spec.pixel_embed_dim; }
};

// Decoder head for one modality. The pixel-level output projection is not a parameter of its
// own: it reads the embedder's pixel table transposed, so the two share storage.
template <typename T>
class ModalityDecoder {
 public:
  ModalityDecoder() = default;
  ModalityDecoder(ModalityEmbedder<T>& tied, int hidden_dim, Rng& rng);

  Parameter<T> head_projection;  // d × (P²·C)
  Parameter<T> head_bias;        // 1 × (P²·C)

  // Element (c, l) of the C × num_labels output projection, i.e. pixel_table(l, c).
  T output_weight(int c, int label) const { return tied_->pixel_table.value(label, c); }
  const Parameter<T>& output_table() const { return tied_->pixel_table; }
  Parameter<T>& output_table() { return tied_->pixel_table; }
  void retie(ModalityEmbedder<T>& tied) { tied_ = &tied; }

 private:
  ModalityEmbedder<T>* tied_ = nullptr;
};

// Position of the p-th pixel (row-major inside the patch) of token `token` of a frame sequence,
// as a raster offset into the N·H·W label array.
std::size_t patch_pixel_offset(const TokenLayout& layout, int token, int pixel);

// Stage 1 + flattening for a batch of sequences: row b·N·L + t holds the P²·C pixel embeddings
// of token t of item b, pixels row-major, channels contiguous. Throws ShapeError/RangeError.
template <typename T>
void gather_patches(const ModalityEmbedder<T>& emb, std::span<const FrameSequence* const> items,
                    const TokenLayout& layout, Matrix<T>& flat);

// Stage 2: tokens = flat · W′ + b.
template <typename T>
void project_patches(const ModalityEmbedder<T>& emb, const Matrix<T>& flat, Matrix<T>& tokens);

// Per-modality tokens for one sequence, (N·L) × d_I.
template <typename T>
Matrix<T> embed_modality(const FrameSequence& frames, const ModalityEmbedder<T>& emb, const TokenLayout& layout);

// Replaces the masked future tokens of each item by the mask embedding. `masks[b]` has N_p·L
// entries. Returns the replaced row indices. Throws ShapeError on a length mismatch.
template <typename T>
std::vector<std::size_t> apply_mask(Matrix<T>& tokens, std::span<const std::vector<std::uint8_t>* const> masks,
                                    const ModalityEmbedder<T>& emb, const TokenLayout& layout);

template <typename T>
void apply_mask(Matrix<T>& tokens, const std::vector<std::uint8_t>& mask, const ModalityEmbedder<T>& emb,
                const TokenLayout& layout);

// CONCAT joins along the embedding axis in list order; ADD sums. Throws ShapeError.
template <typename T>
Matrix<T> fuse(std::span<const Matrix<T>* const> tokens, Fusion mode, int hidden_dim);

// Gradient of fuse() for modality k: the column slice (CONCAT) or a copy (ADD).
template <typename T>
Matrix<T> unfuse_grad(const Matrix<T>& d_fused, Fusion mode, std::span<const int> widths, std::size_t k);

// Backward of stage 2 and stage 1, given d(tokens) with masked rows already zeroed.
template <typename T>
void embed_backward(ModalityEmbedder<T>& emb, std::span<const FrameSequence* const> items, const TokenLayout& layout,
                    const Matrix<T>& flat, const Matrix<T>& d_tokens);

// Head projection for selected rows of the backbone output: (rows) × (P²·C).
template <typename T>
void decode_hidden(const ModalityDecoder<T>& dec, const Matrix<T>& backbone_out, std::span<const std::size_t> rows,
                   Matrix<T>& hidden);

// Logits (P² × num_labels) of one token from its P²·C decoder hidden row.
template <typename T>
void token_logits(const ModalityDecoder<T>& dec, const T* hidden_row, int pixels, int channels, int labels,
                  T* logits);

// Per-pixel distributions N×H×W×num_labels (rows in raster order, frame-major).
// Every row sums to 1. Throws ShapeError on inconsistent shapes.
template <typename T>
Matrix<T> decode_modality(const Matrix<T>& backbone_out, const ModalityDecoder<T>& dec,
                          const ModalityEmbedder<T>& emb, const TokenLayout& layout);

// Same, but raw logits.
template <typename T>
Matrix<T> decode_logits(const Matrix<T>& backbone_out, const ModalityDecoder<T>& dec,
                        const ModalityEmbedder<T>& emb, const TokenLayout& layout);

template <typename T>
void softmax_rows(Matrix<T>& m);

}  // namespace futurist
