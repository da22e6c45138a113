#pragma once

#include <vector>

#include "futurist/core_types.hpp"
#include "futurist/rng.hpp"
#include "futurist/tensor.hpp"

namespace futurist {

// Weights are stored input-major: y = x·W + b with W of shape in × out.
template <typename T>
struct AttentionParams {
  Parameter<T> query_weight, query_bias;
  Parameter<T> key_weight, key_bias;
  Parameter<T> value_weight, value_bias;
  Parameter<T> output_weight, output_bias;
};

template <typename T>
struct BlockParams {
  Parameter<T> temporal_norm_gain, temporal_norm_bias;
  AttentionParams<T> temporal;
  Parameter<T> spatial_norm_gain, spatial_norm_bias;
  AttentionParams<T> spatial;
  Parameter<T> mlp_norm_gain, mlp_norm_bias;
  Parameter<T> mlp_in_weight, mlp_in_bias;    // d × 4d
  Parameter<T> mlp_out_weight, mlp_out_bias;  // 4d × d
};

// Test hook: sublayers switched off contribute nothing (their residual branch is skipped).
struct SublayerMask {
  bool temporal = true;
  bool spatial = true;
  bool mlp = true;
};

enum class AttentionAxis { kTemporal, kSpatial };

template <typename T>
struct NormCache {
  Matrix<T> normalized;  // x̂
  Matrix<T> output;      // g·x̂ + b
  std::vector<T> inv_std;
};

template <typename T>
struct AttentionCache {
  NormCache<T> norm;
  Matrix<T> query, key, value, context;
  std::vector<T> probs;  // per group, per head: G×G
};

template <typename T>
struct MlpCache {
  NormCache<T> norm;
  Matrix<T> pre_activation;
  Matrix<T> activation;
};

template <typename T>
struct BlockCache {
  AttentionCache<T> temporal;
  AttentionCache<T> spatial;
  MlpCache<T> mlp;
};

template <typename T>
struct BackboneCache {
  std::size_t batch = 0;
  SublayerMask mask;
  std::vector<BlockCache<T>> blocks;
};

// Pre-LN transformer over N·L tokens per item with attention decomposed into a temporal pass
// (tokens sharing a spatial index across the N frames) and a spatial pass (tokens of one
// frame), followed by a GELU MLP; all three sublayers are residual.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& cfg, Rng& rng);

  // `fused` holds batch·N·L rows. Fills `cache` when non-null. Throws ShapeError.
  Matrix<T> forward(const Matrix<T>& fused, BackboneCache<T>* cache, SublayerMask mask = {}) const;
  // Accumulates parameter gradients and returns d(fused).
  Matrix<T> backward(const Matrix<T>& d_out, const BackboneCache<T>& cache);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  const TokenLayout& layout() const { return layout_; }
  int hidden_dim() const { return hidden_; }
  int num_heads() const { return heads_; }

  Parameter<T> position_table;  // (N·L) × d
  std::vector<BlockParams<T>> blocks;

 private:
  TokenLayout layout_;
  int hidden_ = 0;
  int heads_ = 1;
};

// Exact (erf) GELU and its derivative.
template <typename T>
T gelu(T x);
template <typename T>
T gelu_grad(T x);

inline constexpr double kLayerNormEpsilon = 1e-5;

}  // namespace futurist
