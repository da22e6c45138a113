#include "futurist/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "futurist/errors.hpp"
#include "futurist/kernels.hpp"

namespace futurist {

using kernels::Op;

namespace {

const std::vector<std::uint8_t>& mask_for(const Sample& s, const std::string& name) {
  if (!s.masks) throw ContractError("sample has no mask set");
  const auto it = s.masks->per_modality.find(name);
  if (it == s.masks->per_modality.end()) throw ContractError("mask set has no entry for modality " + name);
  return it->second;
}

template <typename T>
struct EmbedPass {
  std::vector<std::vector<const FrameSequence*>> items;  // [modality][item]
  std::vector<Matrix<T>> flat;
  std::vector<std::vector<std::size_t>> replaced;
  Matrix<T> fused;
};

template <typename T>
EmbedPass<T> embed_batch(const Model<T>& model, std::span<const Sample> batch) {
  const ModelConfig& cfg = model.config();
  const std::size_t K = cfg.modalities.size();
  if (batch.empty()) throw ContractError("empty batch");
  EmbedPass<T> pass;
  pass.items.resize(K);
  pass.flat.resize(K);
  pass.replaced.resize(K);
  std::vector<Matrix<T>> tokens(K);
  for (std::size_t k = 0; k < K; ++k) {
    const std::string& name = cfg.modalities[k].name;
    std::vector<const std::vector<std::uint8_t>*> masks;
    for (const Sample& s : batch) {
      if (!s.record) throw ContractError("sample has no record");
      pass.items[k].push_back(&s.record->get(name));
      masks.push_back(&mask_for(s, name));
    }
    gather_patches<T>(model.embedders[k], pass.items[k], cfg.layout, pass.flat[k]);
    project_patches(model.embedders[k], pass.flat[k], tokens[k]);
    pass.replaced[k] = apply_mask<T>(tokens[k], masks, model.embedders[k], cfg.layout);
  }
  std::vector<const Matrix<T>*> views;
  for (const auto& t : tokens) views.push_back(&t);
  pass.fused = fuse<T>(views, cfg.fusion, cfg.hidden_dim);
  return pass;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : config_(cfg) {
  const auto violations = validate_config(cfg);
  if (!violations.empty()) {
    throw ConfigError("invalid config: " + violations.front().field + " " + violations.front().constraint);
  }
  Rng rng(cfg.seed);
  embedders.reserve(cfg.modalities.size());
  for (const auto& spec : cfg.modalities) embedders.emplace_back(spec, cfg.layout.patch, rng);
  backbone = Backbone<T>(cfg, rng);
  decoders.reserve(cfg.modalities.size());
  for (auto& emb : embedders) decoders.emplace_back(emb, cfg.hidden_dim, rng);
}

template <typename T>
Model<T>::Model(const Model& other)
    : embedders(other.embedders), decoders(other.decoders), backbone(other.backbone), config_(other.config_) {
  retie();
}

template <typename T>
Model<T>& Model<T>::operator=(const Model& other) {
  if (this != &other) {
    embedders = other.embedders;
    decoders = other.decoders;
    backbone = other.backbone;
    config_ = other.config_;
    retie();
  }
  return *this;
}

template <typename T>
Model<T>::Model(Model&& other) noexcept
    : embedders(std::move(other.embedders)),
      decoders(std::move(other.decoders)),
      backbone(std::move(other.backbone)),
      config_(std::move(other.config_)) {
  retie();
}

template <typename T>
Model<T>& Model<T>::operator=(Model&& other) noexcept {
  embedders = std::move(other.embedders);
  decoders = std::move(other.decoders);
  backbone = std::move(other.backbone);
  config_ = std::move(other.config_);
  retie();
  return *this;
}

template <typename T>
void Model<T>::retie() {
  for (std::size_t k = 0; k < decoders.size(); ++k) decoders[k].retie(embedders[k]);
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& e : embedders) {
    out.push_back(&e.pixel_table);
    out.push_back(&e.patch_projection);
    out.push_back(&e.patch_bias);
    out.push_back(&e.mask_embedding);
  }
  for (auto* p : backbone.parameters()) out.push_back(p);
  for (auto& d : decoders) {
    out.push_back(&d.head_projection);
    out.push_back(&d.head_bias);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
  auto params = const_cast<Model<T>*>(this)->parameters();
  return {params.begin(), params.end()};
}

template <typename T>
Parameter<T>* Model<T>::find_parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
Matrix<T> Model<T>::fused_input(std::span<const Sample> batch) const {
  return embed_batch(*this, batch).fused;
}

template <typename T>
Matrix<T> Model<T>::encode(const Sample& item, SublayerMask mask) const {
  const Sample batch[] = {item};
  return backbone.forward(embed_batch<T>(*this, batch).fused, nullptr, mask);
}

template <typename T>
std::vector<Matrix<T>> Model<T>::logits(const Sample& item, SublayerMask mask) const {
  const Matrix<T> out = encode(item, mask);
  std::vector<Matrix<T>> result;
  for (std::size_t k = 0; k < decoders.size(); ++k) {
    result.push_back(decode_logits(out, decoders[k], embedders[k], config_.layout));
  }
  return result;
}

template <typename T>
std::vector<Matrix<T>> Model<T>::future_logits(const Sample& item) const {
  const TokenLayout& layout = config_.layout;
  const Matrix<T> out = encode(item);
  const int first = layout.context_frames * layout.tokens_per_frame();
  const std::size_t skip = static_cast<std::size_t>(layout.context_frames) * layout.pixels_per_frame();
  std::vector<std::size_t> rows(layout.future_tokens());
  for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = first + j;
  const int pixels = layout.pixels_per_patch();
  std::vector<Matrix<T>> result;
  for (std::size_t k = 0; k < decoders.size(); ++k) {
    const int channels = embedders[k].spec.pixel_embed_dim;
    const int labels = embedders[k].spec.num_labels;
    Matrix<T> hidden;
    decode_hidden<T>(decoders[k], out, rows, hidden);
    Matrix<T> lg(static_cast<std::size_t>(layout.future_frames) * layout.pixels_per_frame(), labels);
    Matrix<T> tok(pixels, labels);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      token_logits(decoders[k], hidden.row_ptr(j), pixels, channels, labels, tok.data());
      for (int q = 0; q < pixels; ++q) {
        const std::size_t px = patch_pixel_offset(layout, static_cast<int>(rows[j]), q) - skip;
        std::copy_n(tok.row_ptr(q), labels, lg.row_ptr(px));
      }
    }
    result.push_back(std::move(lg));
  }
  return result;
}

template <typename T>
LossBreakdown Model<T>::forward_backward(std::span<const Sample> batch, bool accumulate_grad, SublayerMask mask) {
  const TokenLayout& layout = config_.layout;
  EmbedPass<T> pass = embed_batch(*this, batch);
  BackboneCache<T> cache;
  const Matrix<T> out = backbone.forward(pass.fused, accumulate_grad ? &cache : nullptr, mask);
  const std::size_t d = out.cols();
  Matrix<T> d_out;
  if (accumulate_grad) d_out.reset(out.rows(), d);

  const std::size_t per_item = layout.total_tokens();
  const std::size_t first_future = per_item - layout.future_tokens();
  const int pixels = layout.pixels_per_patch();
  const double batch_size = static_cast<double>(batch.size());

  LossBreakdown result;
  for (std::size_t k = 0; k < decoders.size(); ++k) {
    const ModalitySpec& spec = embedders[k].spec;
    const int channels = spec.pixel_embed_dim;
    const int labels = spec.num_labels;
    std::vector<std::size_t> rows;
    std::vector<std::size_t> owner;
    std::vector<double> norm(batch.size());
    double mean_count = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& m = mask_for(batch[b], spec.name);
      if (m.size() != static_cast<std::size_t>(layout.future_tokens())) throw ShapeError("mask length != N_p*L");
      std::size_t count = 0;
      for (std::size_t j = 0; j < m.size(); ++j) {
        if (!m[j]) continue;
        rows.push_back(b * per_item + first_future + j);
        owner.push_back(b);
        ++count;
      }
      if (count == 0) throw ContractError("empty mask for modality " + spec.name);
      norm[b] = static_cast<double>(count) * pixels;
      mean_count += static_cast<double>(count) / batch_size;
    }

    Matrix<T> hidden;
    decode_hidden<T>(decoders[k], out, rows, hidden);
    Matrix<T> d_hidden;
    if (accumulate_grad) d_hidden.reset(hidden.rows(), hidden.cols());
    const Matrix<T>& table = decoders[k].output_table().value;
    Matrix<T>& table_grad = decoders[k].output_table().grad;
    std::vector<double> item_loss(batch.size(), 0.0);
    Matrix<T> lg(pixels, labels);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t b = owner[i];
      const int token = static_cast<int>(rows[i] - b * per_item);
      const FrameSequence& target = *pass.items[k][b];
      token_logits(decoders[k], hidden.row_ptr(i), pixels, channels, labels, lg.data());
      const T coef = static_cast<T>(spec.loss_weight / (norm[b] * batch_size));
      double sum = 0.0;
      for (int q = 0; q < pixels; ++q) {
        T* row = lg.row_ptr(q);
        const int label = target.labels[patch_pixel_offset(layout, token, q)];
        const T mx = *std::max_element(row, row + labels);
        const double shifted = static_cast<double>(row[label] - mx);
        T z{0};
        for (int c = 0; c < labels; ++c) {
          row[c] = std::exp(row[c] - mx);
          z += row[c];
        }
        sum += std::log(static_cast<double>(z)) - shifted;
        if (accumulate_grad) {
          const T inv = T{1} / z;
          for (int c = 0; c < labels; ++c) row[c] = row[c] * inv * coef;
          row[label] -= coef;
        }
      }
      item_loss[b] += sum;
      if (accumulate_grad) {
        // lg now holds d(loss)/d(logits) for this token
        kernels::gemm<T>(Op::kNone, Op::kNone, pixels, channels, labels, T{1}, lg.data(), labels, table.data(),
                         channels, T{0}, d_hidden.row_ptr(i), channels);
        kernels::gemm<T>(Op::kTranspose, Op::kNone, labels, channels, pixels, T{1}, lg.data(), labels,
                         hidden.row_ptr(i), channels, T{1}, table_grad.data(), channels);
      }
    }
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) loss += item_loss[b] / norm[b] / batch_size;
    result.modalities.push_back(spec.name);
    result.loss.push_back(loss);
    result.masked_tokens.push_back(mean_count);
    result.total += spec.loss_weight * loss;

    if (accumulate_grad) {
      ModalityDecoder<T>& dec = decoders[k];
      const std::size_t width = hidden.cols();
      Matrix<T> selected(rows.size(), d);
      for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(out.row_ptr(rows[i]), d, selected.row_ptr(i));
      kernels::gemm<T>(Op::kTranspose, Op::kNone, d, width, rows.size(), T{1}, selected.data(), d, d_hidden.data(),
                       width, T{1}, dec.head_projection.grad.data(), width);
      T* db = dec.head_bias.grad.data();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const T* r = d_hidden.row_ptr(i);
        for (std::size_t c = 0; c < width; ++c) db[c] += r[c];
      }
      Matrix<T> d_selected(rows.size(), d);
      kernels::gemm<T>(Op::kNone, Op::kTranspose, rows.size(), d, width, T{1}, d_hidden.data(), width,
                       dec.head_projection.value.data(), width, T{0}, d_selected.data(), d);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        kernels::axpy<T>(d, T{1}, d_selected.row_ptr(i), d_out.row_ptr(rows[i]));
      }
    }
  }

  if (accumulate_grad) {
    const Matrix<T> d_fused = backbone.backward(d_out, cache);
    std::vector<int> widths;
    for (const auto& spec : config_.modalities) widths.push_back(spec.token_embed_dim);
    for (std::size_t k = 0; k < embedders.size(); ++k) {
      Matrix<T> d_tokens = unfuse_grad<T>(d_fused, config_.fusion, widths, k);
      ModalityEmbedder<T>& emb = embedders[k];
      T* dm = emb.mask_embedding.grad.data();
      for (const std::size_t r : pass.replaced[k]) {
        T* row = d_tokens.row_ptr(r);
        for (std::size_t c = 0; c < d_tokens.cols(); ++c) {
          dm[c] += row[c];
          row[c] = T{0};
        }
      }
      embed_backward<T>(emb, pass.items[k], layout, pass.flat[k], d_tokens);
    }
  }
  return result;
}

template class Model<float>;
template class Model<double>;

}  // namespace futurist
