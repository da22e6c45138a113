#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace futurist {

// A dense discrete per-pixel channel (semantic classes, depth bins, ...).
struct ModalitySpec {
  std::string name;
  int num_labels = 2;
  int pixel_embed_dim = 10;
  int token_embed_dim = 64;
  double loss_weight = 1.0;
  // Label ids that count as movable objects for the MO-mIoU metric.
  std::vector<int> movable_label_ids;

  bool operator==(const ModalitySpec&) const = default;
};

// Frame/patch geometry shared by every modality of a sequence.
struct TokenLayout {
  int frames = 5;
  int context_frames = 4;
  int future_frames = 1;
  int height = 64;
  int width = 128;
  int patch = 16;

  int patches_y() const { return height / patch; }
  int patches_x() const { return width / patch; }
  int tokens_per_frame() const { return patches_y() * patches_x(); }
  int total_tokens() const { return frames * tokens_per_frame(); }
  int future_tokens() const { return future_frames * tokens_per_frame(); }
  int pixels_per_frame() const { return height * width; }
  int pixels_per_patch() const { return patch * patch; }

  bool operator==(const TokenLayout&) const = default;
};

struct TokenCoord {
  int frame = 0;
  int row = 0;
  int col = 0;
  bool operator==(const TokenCoord&) const = default;
};

// frame·L + row·(W/P) + col. Throws RangeError for out-of-range coordinates.
int token_index(int frame, int row, int col, const TokenLayout& layout);
TokenCoord token_coord(int index, const TokenLayout& layout);

// Label storage sized to the alphabet: 8-bit when every id fits, 16-bit otherwise.
class LabelArray {
 public:
  LabelArray() = default;
  LabelArray(std::size_t size, int num_labels);

  std::size_t size() const;
  bool wide() const { return std::holds_alternative<std::vector<std::uint16_t>>(data_); }

  std::uint16_t operator[](std::size_t i) const {
    if (const auto* narrow = std::get_if<std::vector<std::uint8_t>>(&data_)) return (*narrow)[i];
    return std::get<std::vector<std::uint16_t>>(data_)[i];
  }
  void set(std::size_t i, std::uint16_t value);
  void fill(std::uint16_t value);

  // Copy of `count` entries starting at `offset` into a new array of the same width.
  LabelArray slice(std::size_t offset, std::size_t count) const;
  void append(const LabelArray& other);

  bool operator==(const LabelArray&) const = default;

 private:
  std::variant<std::vector<std::uint8_t>, std::vector<std::uint16_t>> data_;
};

// Values that can appear only in evaluation ground truth (Cityscapes "void").
inline constexpr int kIgnoreLabel = 255;

// N frames of H×W labels for one modality.
struct FrameSequence {
  ModalitySpec modality;
  int height = 0;
  int width = 0;
  LabelArray labels;              // N·H·W, frame-major then row-major
  std::vector<int> frame_indices;  // source video frame numbers

  int num_frames() const { return static_cast<int>(frame_indices.size()); }
  std::uint16_t at(int frame, int y, int x) const {
    return labels[(static_cast<std::size_t>(frame) * height + y) * width + x];
  }
  LabelArray frame(int f) const;
  FrameSequence frames(int first, int count) const;

  bool operator==(const FrameSequence&) const = default;
};

// Throws RangeError/ShapeError when labels or frame indices break their invariants.
// `allow_ignore` admits kIgnoreLabel (evaluation ground truth only).
void check_frame_sequence(const FrameSequence& seq, bool allow_ignore = false);

// Per-modality future-token masks; 1 = masked.
struct MaskSet {
  std::map<std::string, std::vector<std::uint8_t>> per_modality;
  double ratio = 0.0;
  int scheduled_count = 0;
};

enum class Fusion { kConcat, kAdd };
enum class MaskingStrategy {
  kFullyIndependentSameR,
  kFullyIndependentDiffR,
  kFullyShared,
  kPartiallySharedExclusive,
  kFullyMasked,
};
enum class Schedule { kIdentity, kCosine };
enum class AbsRelDenominator { kPredicted, kGroundTruth };

std::string to_string(Fusion v);
std::string to_string(MaskingStrategy v);
std::string to_string(Schedule v);
std::string to_string(AbsRelDenominator v);
Fusion parse_fusion(const std::string& s);
MaskingStrategy parse_masking_strategy(const std::string& s);
Schedule parse_schedule(const std::string& s);
AbsRelDenominator parse_absrel_denominator(const std::string& s);

struct OptimizerConfig {
  double learning_rate = 1.6e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  int epochs = 1;
  int batch_size = 16;
  int warmup_steps = 0;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;

  bool operator==(const OptimizerConfig&) const = default;
};

struct ModelConfig {
  TokenLayout layout;
  std::vector<ModalitySpec> modalities;
  int hidden_dim = 128;
  int num_layers = 4;
  int num_heads = 4;
  Fusion fusion = Fusion::kConcat;
  MaskingStrategy masking_strategy = MaskingStrategy::kPartiallySharedExclusive;
  Schedule schedule = Schedule::kCosine;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  int subsample = 3;
  AbsRelDenominator absrel_denominator = AbsRelDenominator::kPredicted;

  const ModalitySpec* find_modality(const std::string& name) const;
  int modality_index(const std::string& name) const;  // -1 if absent

  bool operator==(const ModelConfig&) const = default;
};

struct ConfigViolation {
  std::string field;
  std::string constraint;
};

// Empty iff every invariant holds. Never throws.
std::vector<ConfigViolation> validate_config(const ModelConfig& cfg);

inline constexpr const char* kSegmentation = "segmentation";
inline constexpr const char* kDepth = "depth";

// Cityscapes train ids of person, rider, car, truck, bus, train, motorcycle, bicycle.
std::vector<int> cityscapes_movable_ids();

ModalitySpec segmentation_modality(int token_embed_dim);
ModalitySpec depth_modality(int token_embed_dim, int num_bins = 256);

// 64×128, P=16, N=5, d=128, 4 layers, 4 heads, CONCAT, partially-shared + exclusive, batch 16.
ModelConfig desk_config();

}  // namespace futurist
