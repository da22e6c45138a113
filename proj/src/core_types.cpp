#include "futurist/core_types.hpp"

#include <algorithm>
#include <sstream>

#include "futurist/errors.hpp"

namespace futurist {

int token_index(int frame, int row, int col, const TokenLayout& layout) {
  if (frame < 0 || frame >= layout.frames || row < 0 || row >= layout.patches_y() || col < 0 ||
      col >= layout.patches_x()) {
    std::ostringstream os;
    os << "token coordinate (" << frame << "," << row << "," << col << ") outside layout "
       << layout.frames << "x" << layout.patches_y() << "x" << layout.patches_x();
    throw RangeError(os.str());
  }
  return frame * layout.tokens_per_frame() + row * layout.patches_x() + col;
}

TokenCoord token_coord(int index, const TokenLayout& layout) {
  if (index < 0 || index >= layout.total_tokens()) {
    throw RangeError("token index " + std::to_string(index) + " outside [0, " +
                     std::to_string(layout.total_tokens()) + ")");
  }
  const int per_frame = layout.tokens_per_frame();
  const int within = index % per_frame;
  return {index / per_frame, within / layout.patches_x(), within % layout.patches_x()};
}

LabelArray::LabelArray(std::size_t size, int num_labels) {
  if (num_labels <= 256) {
    data_ = std::vector<std::uint8_t>(size, 0);
  } else {
    data_ = std::vector<std::uint16_t>(size, 0);
  }
}

std::size_t LabelArray::size() const {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

void LabelArray::set(std::size_t i, std::uint16_t value) {
  if (auto* narrow = std::get_if<std::vector<std::uint8_t>>(&data_)) {
    if (value > 0xFF) throw RangeError("label " + std::to_string(value) + " does not fit 8-bit storage");
    (*narrow)[i] = static_cast<std::uint8_t>(value);
  } else {
    std::get<std::vector<std::uint16_t>>(data_)[i] = value;
  }
}

void LabelArray::fill(std::uint16_t value) {
  for (std::size_t i = 0; i < size(); ++i) set(i, value);
}

LabelArray LabelArray::slice(std::size_t offset, std::size_t count) const {
  LabelArray out;
  std::visit(
      [&](const auto& v) {
        using Vec = std::decay_t<decltype(v)>;
        out.data_ = Vec(v.begin() + static_cast<std::ptrdiff_t>(offset),
                        v.begin() + static_cast<std::ptrdiff_t>(offset + count));
      },
      data_);
  return out;
}

void LabelArray::append(const LabelArray& other) {
  if (size() == 0 && wide() != other.wide()) {
    data_ = other.data_;
    return;
  }
  if (wide() != other.wide()) throw ShapeError("cannot append label arrays of different widths");
  std::visit(
      [&](auto& v) {
        using Vec = std::decay_t<decltype(v)>;
        const auto& src = std::get<Vec>(other.data_);
        v.insert(v.end(), src.begin(), src.end());
      },
      data_);
}

LabelArray FrameSequence::frame(int f) const {
  const std::size_t per = static_cast<std::size_t>(height) * width;
  return labels.slice(per * f, per);
}

FrameSequence FrameSequence::frames(int first, int count) const {
  if (first < 0 || count < 0 || first + count > num_frames()) {
    throw RangeError("frame range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") outside sequence of " + std::to_string(num_frames()) + " frames");
  }
  FrameSequence out;
  out.modality = modality;
  out.height = height;
  out.width = width;
  const std::size_t per = static_cast<std::size_t>(height) * width;
  out.labels = labels.slice(per * first, per * count);
  out.frame_indices.assign(frame_indices.begin() + first, frame_indices.begin() + first + count);
  return out;
}

void check_frame_sequence(const FrameSequence& seq, bool allow_ignore) {
  const std::size_t expected = static_cast<std::size_t>(seq.num_frames()) * seq.height * seq.width;
  if (seq.labels.size() != expected) {
    throw ShapeError("label array holds " + std::to_string(seq.labels.size()) + " values, expected " +
                     std::to_string(expected));
  }
  for (std::size_t i = 0; i < seq.labels.size(); ++i) {
    const int v = seq.labels[i];
    if (v >= seq.modality.num_labels && !(allow_ignore && v == kIgnoreLabel)) {
      throw RangeError("label " + std::to_string(v) + " outside [0, " +
                       std::to_string(seq.modality.num_labels) + ") in modality " + seq.modality.name);
    }
  }
  for (std::size_t i = 2; i < seq.frame_indices.size(); ++i) {
    if (seq.frame_indices[i] - seq.frame_indices[i - 1] != seq.frame_indices[1] - seq.frame_indices[0]) {
      throw RangeError("frame indices do not have a constant stride");
    }
  }
  for (std::size_t i = 1; i < seq.frame_indices.size(); ++i) {
    if (seq.frame_indices[i] <= seq.frame_indices[i - 1]) {
      throw RangeError("frame indices are not strictly increasing");
    }
  }
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [value, name] : table) {
    if (s == name) return value;
  }
  std::string options;
  for (const auto& entry : table) options += std::string(options.empty() ? "" : ", ") + entry.second;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + options + ")");
}

template <typename E, std::size_t N>
std::string enum_name(E v, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [value, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::pair<Fusion, const char*> kFusionNames[] = {
    {Fusion::kConcat, "CONCAT"},
    {Fusion::kAdd, "ADD"},
};
constexpr std::pair<MaskingStrategy, const char*> kStrategyNames[] = {
    {MaskingStrategy::kFullyIndependentSameR, "FULLY_INDEPENDENT_SAME_R"},
    {MaskingStrategy::kFullyIndependentDiffR, "FULLY_INDEPENDENT_DIFF_R"},
    {MaskingStrategy::kFullyShared, "FULLY_SHARED"},
    {MaskingStrategy::kPartiallySharedExclusive, "PARTIALLY_SHARED_EXCLUSIVE"},
    {MaskingStrategy::kFullyMasked, "FULLY_MASKED"},
};
constexpr std::pair<Schedule, const char*> kScheduleNames[] = {
    {Schedule::kIdentity, "IDENTITY"},
    {Schedule::kCosine, "COSINE"},
};
constexpr std::pair<AbsRelDenominator, const char*> kDenominatorNames[] = {
    {AbsRelDenominator::kPredicted, "pred"},
    {AbsRelDenominator::kGroundTruth, "gt"},
};

}  // namespace

std::string to_string(Fusion v) { return enum_name(v, kFusionNames); }
std::string to_string(MaskingStrategy v) { return enum_name(v, kStrategyNames); }
std::string to_string(Schedule v) { return enum_name(v, kScheduleNames); }
std::string to_string(AbsRelDenominator v) { return enum_name(v, kDenominatorNames); }
Fusion parse_fusion(const std::string& s) { return parse_enum(s, kFusionNames, "fusion"); }
MaskingStrategy parse_masking_strategy(const std::string& s) {
  return parse_enum(s, kStrategyNames, "masking strategy");
}
Schedule parse_schedule(const std::string& s) { return parse_enum(s, kScheduleNames, "schedule"); }
AbsRelDenominator parse_absrel_denominator(const std::string& s) {
  return parse_enum(s, kDenominatorNames, "absrel denominator");
}

const ModalitySpec* ModelConfig::find_modality(const std::string& name) const {
  for (const auto& m : modalities) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

int ModelConfig::modality_index(const std::string& name) const {
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<ConfigViolation> validate_config(const ModelConfig& cfg) {
  std::vector<ConfigViolation> out;
  auto fail = [&](std::string field, std::string constraint) {
    out.push_back({std::move(field), std::move(constraint)});
  };

  const auto& l = cfg.layout;
  if (l.context_frames < 1) fail("layout.context_frames", "must be >= 1");
  if (l.future_frames < 1) fail("layout.future_frames", "must be >= 1");
  if (l.frames != l.context_frames + l.future_frames) {
    fail("layout.frames", "must equal layout.context_frames + layout.future_frames");
  }
  if (l.patch < 1) {
    fail("layout.patch", "must be >= 1");
  } else {
    if (l.height < l.patch || l.height % l.patch != 0) fail("layout.height", "must be a positive multiple of layout.patch");
    if (l.width < l.patch || l.width % l.patch != 0) fail("layout.width", "must be a positive multiple of layout.patch");
  }

  if (cfg.modalities.empty()) fail("modalities", "at least one modality is required");
  int concat_width = 0;
  for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
    const auto& m = cfg.modalities[i];
    const std::string prefix = "modalities." + std::to_string(i) + ".";
    if (m.name.empty()) fail(prefix + "name", "must be non-empty");
    for (std::size_t j = 0; j < i; ++j) {
      if (cfg.modalities[j].name == m.name) fail(prefix + "name", "must be unique");
    }
    if (m.num_labels < 2) fail(prefix + "num_labels", "must be >= 2");
    if (m.num_labels > 65535) fail(prefix + "num_labels", "must fit 16-bit label storage");
    if (m.pixel_embed_dim < 1) fail(prefix + "pixel_embed_dim", "must be >= 1");
    if (m.token_embed_dim < 1) fail(prefix + "token_embed_dim", "must be >= 1");
    if (!(m.loss_weight >= 0.0)) fail(prefix + "loss_weight", "must be >= 0");
    for (int id : m.movable_label_ids) {
      if (id < 0 || id >= m.num_labels) {
        fail(prefix + "movable_label_ids", "ids must lie in [0, num_labels)");
        break;
      }
    }
    concat_width += m.token_embed_dim;
    if (cfg.fusion == Fusion::kAdd && m.token_embed_dim != cfg.hidden_dim) {
      fail(prefix + "token_embed_dim", "ADD fusion requires token_embed_dim == hidden_dim");
    }
  }
  if (cfg.fusion == Fusion::kConcat && !cfg.modalities.empty() && concat_width != cfg.hidden_dim) {
    fail("hidden_dim", "CONCAT fusion requires the token_embed_dim sum to equal hidden_dim");
  }

  if (cfg.hidden_dim < 1) fail("hidden_dim", "must be >= 1");
  if (cfg.num_layers < 0) fail("num_layers", "must be >= 0");
  if (cfg.num_heads < 1) {
    fail("num_heads", "must be >= 1");
  } else if (cfg.hidden_dim % cfg.num_heads != 0) {
    fail("num_heads", "hidden_dim must be divisible by num_heads");
  }

  const auto& o = cfg.optimizer;
  if (!(o.learning_rate > 0.0)) fail("optimizer.learning_rate", "must be > 0");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) fail("optimizer.beta1", "must lie in [0, 1)");
  if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) fail("optimizer.beta2", "must lie in [0, 1)");
  if (!(o.epsilon > 0.0)) fail("optimizer.epsilon", "must be > 0");
  if (o.epochs < 0) fail("optimizer.epochs", "must be >= 0");
  if (o.batch_size < 1) fail("optimizer.batch_size", "must be >= 1");
  if (o.warmup_steps < 0) fail("optimizer.warmup_steps", "must be >= 0");
  if (!(o.grad_clip >= 0.0)) fail("optimizer.grad_clip", "must be >= 0");
  if (cfg.subsample < 1) fail("subsample", "must be >= 1");
  return out;
}

std::vector<int> cityscapes_movable_ids() { return {11, 12, 13, 14, 15, 16, 17, 18}; }

ModalitySpec segmentation_modality(int token_embed_dim) {
  return {kSegmentation, 19, 10, token_embed_dim, 1.0, cityscapes_movable_ids()};
}

ModalitySpec depth_modality(int token_embed_dim, int num_bins) {
  return {kDepth, num_bins, 10, token_embed_dim, 1.0, {}};
}

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.layout = TokenLayout{5, 4, 1, 64, 128, 16};
  cfg.hidden_dim = 128;
  cfg.num_layers = 4;
  cfg.num_heads = 4;
  cfg.modalities = {segmentation_modality(64), depth_modality(64)};
  cfg.fusion = Fusion::kConcat;
  cfg.masking_strategy = MaskingStrategy::kPartiallySharedExclusive;
  cfg.schedule = Schedule::kCosine;
  cfg.optimizer.batch_size = 16;
  return cfg;
}

}  // namespace futurist
