#include "futurist/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "futurist/errors.hpp"
#include "futurist/kernels.hpp"

namespace futurist {

using kernels::Op;

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * (std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>);
  return cdf + x * pdf;
}

namespace {

template <typename T>
void init_normal(Parameter<T>& p, Rng& rng, double stddev) {
  for (auto& v : p.value.flat()) v = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
AttentionParams<T> make_attention(const std::string& prefix, int d, Rng& rng) {
  AttentionParams<T> a{
      {prefix + ".query_weight", std::size_t(d), std::size_t(d)},  {prefix + ".query_bias", 1, std::size_t(d)},
      {prefix + ".key_weight", std::size_t(d), std::size_t(d)},    {prefix + ".key_bias", 1, std::size_t(d)},
      {prefix + ".value_weight", std::size_t(d), std::size_t(d)},  {prefix + ".value_bias", 1, std::size_t(d)},
      {prefix + ".output_weight", std::size_t(d), std::size_t(d)}, {prefix + ".output_bias", 1, std::size_t(d)},
  };
  init_normal(a.query_weight, rng, 0.02);
  init_normal(a.key_weight, rng, 0.02);
  init_normal(a.value_weight, rng, 0.02);
  init_normal(a.output_weight, rng, 0.02);
  return a;
}

template <typename T>
void push_attention(std::vector<Parameter<T>*>& out, AttentionParams<T>& a) {
  for (auto* p : {&a.query_weight, &a.query_bias, &a.key_weight, &a.key_bias, &a.value_weight, &a.value_bias,
                  &a.output_weight, &a.output_bias}) {
    out.push_back(p);
  }
}

template <typename T>
void layer_norm_forward(const Matrix<T>& x, const Parameter<T>& gain, const Parameter<T>& bias, NormCache<T>& c) {
  const std::size_t rows = x.rows();
  const std::size_t d = x.cols();
  c.normalized.resize(rows, d);
  c.output.resize(rows, d);
  c.inv_std.resize(rows);
  const T* g = gain.value.data();
  const T* b = bias.value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.row_ptr(r);
    T mean{0};
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEpsilon));
    c.inv_std[r] = inv;
    T* nr = c.normalized.row_ptr(r);
    T* yr = c.output.row_ptr(r);
    for (std::size_t i = 0; i < d; ++i) {
      nr[i] = (xr[i] - mean) * inv;
      yr[i] = g[i] * nr[i] + b[i];
    }
  }
}

// d_x += LN backward of d_out
template <typename T>
void layer_norm_backward(const NormCache<T>& c, Parameter<T>& gain, Parameter<T>& bias, const Matrix<T>& d_out,
                         Matrix<T>& d_x) {
  const std::size_t rows = d_out.rows();
  const std::size_t d = d_out.cols();
  const T* g = gain.value.data();
  T* dg = gain.grad.data();
  T* db = bias.grad.data();
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dy = d_out.row_ptr(r);
    const T* xh = c.normalized.row_ptr(r);
    T mean_dxhat{0};
    T mean_dxhat_xhat{0};
    for (std::size_t i = 0; i < d; ++i) {
      dg[i] += dy[i] * xh[i];
      db[i] += dy[i];
      dxhat[i] = dy[i] * g[i];
      mean_dxhat += dxhat[i];
      mean_dxhat_xhat += dxhat[i] * xh[i];
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    T* dx = d_x.row_ptr(r);
    const T inv = c.inv_std[r];
    for (std::size_t i = 0; i < d; ++i) dx[i] += inv * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
  }
}

template <typename T>
void linear(const Matrix<T>& x, const Parameter<T>& w, const Parameter<T>& b, Matrix<T>& y) {
  const std::size_t out = w.value.cols();
  y.resize(x.rows(), out);
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy_n(b.value.data(), out, y.row_ptr(r));
  kernels::gemm<T>(Op::kNone, Op::kNone, x.rows(), out, x.cols(), T{1}, x.data(), x.cols(), w.value.data(), out, T{1},
                   y.data(), out);
}

// Parameter grads from y = x·W + b; d_x (= or +=) dy·Wᵀ when requested.
template <typename T>
void linear_backward(const Matrix<T>& x, Parameter<T>& w, Parameter<T>& b, const Matrix<T>& dy, Matrix<T>* d_x,
                     bool accumulate) {
  const std::size_t in = w.value.rows();
  const std::size_t out = w.value.cols();
  kernels::gemm<T>(Op::kTranspose, Op::kNone, in, out, x.rows(), T{1}, x.data(), in, dy.data(), out, T{1},
                   w.grad.data(), out);
  T* db = b.grad.data();
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const T* row = dy.row_ptr(r);
    for (std::size_t c = 0; c < out; ++c) db[c] += row[c];
  }
  if (d_x) {
    if (!accumulate) d_x->resize(dy.rows(), in);
    kernels::gemm<T>(Op::kNone, Op::kTranspose, dy.rows(), in, out, T{1}, dy.data(), out, w.value.data(), out,
                     accumulate ? T{1} : T{0}, d_x->data(), in);
  }
}

// Rows of group g: first row and the stride (in rows) between consecutive members.
struct Grouping {
  std::size_t groups;
  std::size_t size;
  std::size_t tokens_per_item;
  std::size_t per_frame;
  AttentionAxis axis;

  Grouping(AttentionAxis ax, std::size_t batch, const TokenLayout& layout)
      : tokens_per_item(layout.total_tokens()), per_frame(layout.tokens_per_frame()), axis(ax) {
    if (axis == AttentionAxis::kTemporal) {
      groups = batch * per_frame;
      size = layout.frames;
    } else {
      groups = batch * layout.frames;
      size = per_frame;
    }
  }
  std::size_t first_row(std::size_t g) const {
    if (axis == AttentionAxis::kTemporal) return (g / per_frame) * tokens_per_item + g % per_frame;
    return g * per_frame;  // items are contiguous blocks of N frames
  }
  std::size_t row_stride() const { return axis == AttentionAxis::kTemporal ? per_frame : 1; }
};

template <typename T>
void softmax_inplace(T* row, std::size_t n) {
  const T mx = *std::max_element(row, row + n);
  T sum{0};
  for (std::size_t i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  const T inv = T(1) / sum;
  for (std::size_t i = 0; i < n; ++i) row[i] *= inv;
}

template <typename T>
void attention_forward(const Matrix<T>& x, const Parameter<T>& gain, const Parameter<T>& bias,
                       const AttentionParams<T>& p, const Grouping& grouping, int heads, AttentionCache<T>& c,
                       Matrix<T>& out) {
  layer_norm_forward(x, gain, bias, c.norm);
  linear(c.norm.output, p.query_weight, p.query_bias, c.query);
  linear(c.norm.output, p.key_weight, p.key_bias, c.key);
  linear(c.norm.output, p.value_weight, p.value_bias, c.value);
  const std::size_t d = x.cols();
  const std::size_t dh = d / heads;
  const std::size_t G = grouping.size;
  const std::size_t ld = grouping.row_stride() * d;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  c.context.reset(x.rows(), d);
  c.probs.resize(grouping.groups * heads * G * G);
  for (std::size_t g = 0; g < grouping.groups; ++g) {
    const std::size_t base = grouping.first_row(g) * d;
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = base + h * dh;
      T* probs = c.probs.data() + (g * heads + h) * G * G;
      kernels::gemm<T>(Op::kNone, Op::kTranspose, G, G, dh, scale, c.query.data() + off, ld, c.key.data() + off, ld,
                       T{0}, probs, G);
      for (std::size_t i = 0; i < G; ++i) softmax_inplace(probs + i * G, G);
      kernels::gemm<T>(Op::kNone, Op::kNone, G, dh, G, T{1}, probs, G, c.value.data() + off, ld, T{0},
                       c.context.data() + off, ld);
    }
  }
  linear(c.context, p.output_weight, p.output_bias, out);
}

// d_x += gradient through the attention branch given d(branch output).
template <typename T>
void attention_backward(const AttentionCache<T>& c, Parameter<T>& gain, Parameter<T>& bias, AttentionParams<T>& p,
                        const Grouping& grouping, int heads, const Matrix<T>& d_out, Matrix<T>& d_x) {
  const std::size_t rows = d_out.rows();
  const std::size_t d = d_out.cols();
  const std::size_t dh = d / heads;
  const std::size_t G = grouping.size;
  const std::size_t ld = grouping.row_stride() * d;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> d_context;
  linear_backward(c.context, p.output_weight, p.output_bias, d_out, &d_context, false);

  Matrix<T> dq(rows, d), dk(rows, d), dv(rows, d);
  std::vector<T> dp(G * G);
  for (std::size_t g = 0; g < grouping.groups; ++g) {
    const std::size_t base = grouping.first_row(g) * d;
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = base + h * dh;
      const T* probs = c.probs.data() + (g * heads + h) * G * G;
      // dV += Pᵀ·dO ; dP = dO·Vᵀ
      kernels::gemm<T>(Op::kTranspose, Op::kNone, G, dh, G, T{1}, probs, G, d_context.data() + off, ld, T{1},
                       dv.data() + off, ld);
      kernels::gemm<T>(Op::kNone, Op::kTranspose, G, G, dh, T{1}, d_context.data() + off, ld, c.value.data() + off,
                       ld, T{0}, dp.data(), G);
      for (std::size_t i = 0; i < G; ++i) {
        const T* pr = probs + i * G;
        T* dr = dp.data() + i * G;
        T dot{0};
        for (std::size_t j = 0; j < G; ++j) dot += pr[j] * dr[j];
        for (std::size_t j = 0; j < G; ++j) dr[j] = pr[j] * (dr[j] - dot);
      }
      kernels::gemm<T>(Op::kNone, Op::kNone, G, dh, G, scale, dp.data(), G, c.key.data() + off, ld, T{1},
                       dq.data() + off, ld);
      kernels::gemm<T>(Op::kTranspose, Op::kNone, G, dh, G, scale, dp.data(), G, c.query.data() + off, ld, T{1},
                       dk.data() + off, ld);
    }
  }

  Matrix<T> d_norm;
  linear_backward(c.norm.output, p.query_weight, p.query_bias, dq, &d_norm, false);
  linear_backward(c.norm.output, p.key_weight, p.key_bias, dk, &d_norm, true);
  linear_backward(c.norm.output, p.value_weight, p.value_bias, dv, &d_norm, true);
  layer_norm_backward(c.norm, gain, bias, d_norm, d_x);
}

template <typename T>
void mlp_forward(const Matrix<T>& x, const BlockParams<T>& p, MlpCache<T>& c, Matrix<T>& out) {
  layer_norm_forward(x, p.mlp_norm_gain, p.mlp_norm_bias, c.norm);
  linear(c.norm.output, p.mlp_in_weight, p.mlp_in_bias, c.pre_activation);
  c.activation.resize(c.pre_activation.rows(), c.pre_activation.cols());
  const T* a = c.pre_activation.data();
  T* g = c.activation.data();
  for (std::size_t i = 0; i < c.activation.size(); ++i) g[i] = gelu(a[i]);
  linear(c.activation, p.mlp_out_weight, p.mlp_out_bias, out);
}

template <typename T>
void mlp_backward(const MlpCache<T>& c, BlockParams<T>& p, const Matrix<T>& d_out, Matrix<T>& d_x) {
  Matrix<T> d_act;
  linear_backward(c.activation, p.mlp_out_weight, p.mlp_out_bias, d_out, &d_act, false);
  const T* a = c.pre_activation.data();
  T* da = d_act.data();
  for (std::size_t i = 0; i < d_act.size(); ++i) da[i] *= gelu_grad(a[i]);
  Matrix<T> d_norm;
  linear_backward(c.norm.output, p.mlp_in_weight, p.mlp_in_bias, d_act, &d_norm, false);
  layer_norm_backward(c.norm, p.mlp_norm_gain, p.mlp_norm_bias, d_norm, d_x);
}

template <typename T>
void add_inplace(Matrix<T>& x, const Matrix<T>& y) {
  T* a = x.data();
  const T* b = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) a[i] += b[i];
}

}  // namespace

template <typename T>
Backbone<T>::Backbone(const ModelConfig& cfg, Rng& rng)
    : position_table("backbone.position_table", cfg.layout.total_tokens(), cfg.hidden_dim),
      layout_(cfg.layout),
      hidden_(cfg.hidden_dim),
      heads_(cfg.num_heads) {
  if (hidden_ % heads_ != 0) throw ShapeError("hidden_dim must be divisible by num_heads");
  init_normal(position_table, rng, 0.02);
  const std::size_t d = hidden_;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string prefix = "backbone.block" + std::to_string(l);
    BlockParams<T> b{
        {prefix + ".temporal_norm_gain", 1, d},
        {prefix + ".temporal_norm_bias", 1, d},
        make_attention<T>(prefix + ".temporal", hidden_, rng),
        {prefix + ".spatial_norm_gain", 1, d},
        {prefix + ".spatial_norm_bias", 1, d},
        make_attention<T>(prefix + ".spatial", hidden_, rng),
        {prefix + ".mlp_norm_gain", 1, d},
        {prefix + ".mlp_norm_bias", 1, d},
        {prefix + ".mlp_in_weight", d, 4 * d},
        {prefix + ".mlp_in_bias", 1, 4 * d},
        {prefix + ".mlp_out_weight", 4 * d, d},
        {prefix + ".mlp_out_bias", 1, d},
    };
    b.temporal_norm_gain.value.fill(T{1});
    b.spatial_norm_gain.value.fill(T{1});
    b.mlp_norm_gain.value.fill(T{1});
    init_normal(b.mlp_in_weight, rng, 0.02);
    init_normal(b.mlp_out_weight, rng, 0.02);
    blocks.push_back(std::move(b));
  }
}

template <typename T>
std::vector<Parameter<T>*> Backbone<T>::parameters() {
  std::vector<Parameter<T>*> out{&position_table};
  for (auto& b : blocks) {
    out.push_back(&b.temporal_norm_gain);
    out.push_back(&b.temporal_norm_bias);
    push_attention(out, b.temporal);
    out.push_back(&b.spatial_norm_gain);
    out.push_back(&b.spatial_norm_bias);
    push_attention(out, b.spatial);
    for (auto* p : {&b.mlp_norm_gain, &b.mlp_norm_bias, &b.mlp_in_weight, &b.mlp_in_bias, &b.mlp_out_weight,
                    &b.mlp_out_bias}) {
      out.push_back(p);
    }
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Backbone<T>::parameters() const {
  auto mutable_params = const_cast<Backbone<T>*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
Matrix<T> Backbone<T>::forward(const Matrix<T>& fused, BackboneCache<T>* cache, SublayerMask mask) const {
  const std::size_t per_item = layout_.total_tokens();
  if (fused.cols() != static_cast<std::size_t>(hidden_) || fused.rows() == 0 || fused.rows() % per_item != 0) {
    throw ShapeError("backbone input must be (batch*N*L) x d with N*L = " + std::to_string(per_item) +
                     " and d = " + std::to_string(hidden_));
  }
  const std::size_t batch = fused.rows() / per_item;
  const std::size_t d = hidden_;
  Matrix<T> x = fused;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < per_item; ++t) {
      T* row = x.row_ptr(b * per_item + t);
      const T* pos = position_table.value.row_ptr(t);
      for (std::size_t i = 0; i < d; ++i) row[i] += pos[i];
    }
  }

  BackboneCache<T> local;
  BackboneCache<T>& c = cache ? *cache : local;
  c.batch = batch;
  c.mask = mask;
  c.blocks.resize(blocks.size());
  const Grouping temporal(AttentionAxis::kTemporal, batch, layout_);
  const Grouping spatial(AttentionAxis::kSpatial, batch, layout_);
  Matrix<T> branch;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& p = blocks[l];
    auto& bc = c.blocks[l];
    if (mask.temporal) {
      attention_forward(x, p.temporal_norm_gain, p.temporal_norm_bias, p.temporal, temporal, heads_, bc.temporal,
                        branch);
      add_inplace(x, branch);
    }
    if (mask.spatial) {
      attention_forward(x, p.spatial_norm_gain, p.spatial_norm_bias, p.spatial, spatial, heads_, bc.spatial, branch);
      add_inplace(x, branch);
    }
    if (mask.mlp) {
      mlp_forward(x, p, bc.mlp, branch);
      add_inplace(x, branch);
    }
    if (!cache) bc = BlockCache<T>{};
  }
  return x;
}

template <typename T>
Matrix<T> Backbone<T>::backward(const Matrix<T>& d_out, const BackboneCache<T>& cache) {
  const std::size_t per_item = layout_.total_tokens();
  const std::size_t d = hidden_;
  if (cache.blocks.size() != blocks.size() || d_out.rows() != cache.batch * per_item || d_out.cols() != d) {
    throw ShapeError("backbone backward called with a cache from a different forward pass");
  }
  const Grouping temporal(AttentionAxis::kTemporal, cache.batch, layout_);
  const Grouping spatial(AttentionAxis::kSpatial, cache.batch, layout_);
  Matrix<T> dx = d_out;
  Matrix<T> d_branch;
  for (std::size_t l = blocks.size(); l-- > 0;) {
    auto& p = blocks[l];
    const auto& bc = cache.blocks[l];
    if (cache.mask.mlp) {
      d_branch = dx;
      mlp_backward(bc.mlp, p, d_branch, dx);
    }
    if (cache.mask.spatial) {
      d_branch = dx;
      attention_backward(bc.spatial, p.spatial_norm_gain, p.spatial_norm_bias, p.spatial, spatial, heads_, d_branch,
                         dx);
    }
    if (cache.mask.temporal) {
      d_branch = dx;
      attention_backward(bc.temporal, p.temporal_norm_gain, p.temporal_norm_bias, p.temporal, temporal, heads_,
                         d_branch, dx);
    }
  }
  for (std::size_t b = 0; b < cache.batch; ++b) {
    for (std::size_t t = 0; t < per_item; ++t) {
      const T* row = dx.row_ptr(b * per_item + t);
      T* g = position_table.grad.row_ptr(t);
      for (std::size_t i = 0; i < d; ++i) g[i] += row[i];
    }
  }
  return dx;
}

template float gelu<float>(float);
template double gelu<double>(double);
template float gelu_grad<float>(float);
template double gelu_grad<double>(double);
template class Backbone<float>;
template class Backbone<double>;

}  // namespace futurist
