#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "futurist/core_types.hpp"

namespace futurist {

enum class ShapeKind { kRectangle, kDisc };

// One moving shape. (x, y) is the top-left of its bounding box at frame 0; the box is
// width×height for rectangles and (2·radius+1)² for discs.
struct SyntheticShape {
  ShapeKind kind = ShapeKind::kRectangle;
  int semantic_label = 13;
  int depth_bin = 64;
  int x = 0;
  int y = 0;
  int dx = 0;  // pixels per source frame
  int dy = 0;
  int width = 8;
  int height = 8;
  int radius = 4;

  int box_width() const { return kind == ShapeKind::kRectangle ? width : 2 * radius + 1; }
  int box_height() const { return kind == ShapeKind::kRectangle ? height : 2 * radius + 1; }
  bool covers(int u, int v) const;  // (u, v) relative to the bounding box

  bool operator==(const SyntheticShape&) const = default;
};

struct SyntheticSceneSpec {
  int height = 64;
  int width = 128;
  int background_label = 0;
  int background_depth_bin = 8;
  std::vector<SyntheticShape> shapes;
  std::uint64_t seed = 0;
  int num_labels = 19;
  int num_depth_bins = 256;

  bool operator==(const SyntheticSceneSpec&) const = default;
};

// Random scene distribution used by `gen-data` and the training corpus.
struct SceneDistribution {
  int height = 64;
  int width = 128;
  int min_shapes = 2;
  int max_shapes = 3;
  int min_size = 14;
  int max_size = 22;
  int max_speed_x = 3;  // |dx| in pixels per source frame
  int max_speed_y = 1;
  // Depth bins are disparities: larger is nearer. Movers lie in [min, max], the optional
  // static structure between the background and min.
  int min_depth_bin = 40;
  int max_depth_bin = 240;
  int background_label = 0;
  int background_depth_bin = 8;
  // Probability that a scene also contains one static (non-moving) structure.
  double static_shape_probability = 0.5;
  int static_label = 2;
  std::vector<int> moving_labels = {11, 13, 14, 15, 18};

  bool operator==(const SceneDistribution&) const = default;
};

SyntheticSceneSpec sample_scene(const SceneDistribution& dist, std::uint64_t seed);

// `key = value` text for SceneDistribution (keys are the field names).
SceneDistribution parse_scene_distribution(const std::string& text);
SceneDistribution load_scene_distribution(const std::filesystem::path& path);
std::string serialize_scene_distribution(const SceneDistribution& dist);

struct SequenceRecord {
  std::vector<FrameSequence> modalities;
  std::string city;
  std::string sequence_id;
  int subsample = 1;

  const FrameSequence& get(const std::string& name) const;
  FrameSequence& get(const std::string& name);
  int num_frames() const { return modalities.empty() ? 0 : modalities.front().num_frames(); }
  int height() const { return modalities.empty() ? 0 : modalities.front().height; }
  int width() const { return modalities.empty() ? 0 : modalities.front().width; }
  // Sub-record with `count` frames starting at position `first`.
  SequenceRecord frames(int first, int count) const;

  bool operator==(const SequenceRecord&) const = default;
};

// Throws ShapeError unless every modality shares N, H, W and frame indices.
void check_sequence_record(const SequenceRecord& record);

// Segmentation and depth label maps at each requested frame. Pure function of its arguments.
// Throws ShapeError if a shape does not fit the canvas, RangeError for bad frame indices.
SequenceRecord render_synthetic(const SyntheticSceneSpec& spec, const std::vector<int>& frame_indices);

// bin = min(floor(v·num_bins), num_bins − 1); throws RangeError for v outside [0, 1].
std::vector<std::uint16_t> quantize_depth(std::span<const double> disparity, int num_bins);
double dequantize_depth(int bin, int num_bins);

enum class Horizon { kShort, kMid };
int rollout_steps(Horizon horizon);
std::string to_string(Horizon horizon);
Horizon parse_horizon(const std::string& s);

// Source frame numbers of the N_c context frames for a target frame.
std::vector<int> context_frame_indices(int target_frame, Horizon horizon, int context_frames, int subsample = 3);

struct ManifestEntry {
  std::string city;
  std::string sequence_id;
  int target_frame = 20;
  bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// root/{city}/{city}_{seq}_{frame:06d}_{modality}.png
std::filesystem::path label_path(const std::filesystem::path& root, const std::string& city,
                                 const std::string& sequence_id, int frame, const std::string& modality);

// Nearest-neighbour resampling of one label map.
LabelArray resize_nearest(const LabelArray& src, int src_h, int src_w, int dst_h, int dst_w, int num_labels);

// One frame at its stored resolution. Throws LoadError naming the missing path.
FrameSequence load_frame(const std::filesystem::path& root, const std::string& city, const std::string& sequence_id,
                         int frame, const ModalitySpec& modality, bool allow_ignore = false);

// Explicit frames, resampled to layout H×W.
SequenceRecord load_frames(const std::filesystem::path& root, const std::string& city, const std::string& sequence_id,
                           const std::vector<int>& frame_indices, const std::vector<ModalitySpec>& modalities,
                           const TokenLayout& layout, int subsample);

// Context frames for forecasting `target_frame` at the given horizon.
SequenceRecord load_sequence(const std::filesystem::path& root, const std::string& city,
                             const std::string& sequence_id, int target_frame, Horizon horizon,
                             const TokenLayout& layout, const std::vector<ModalitySpec>& modalities,
                             int subsample = 3);

// Every consecutive frame 0..F−1 present on disk (F found by probing), resampled to the layout.
SequenceRecord load_clip(const std::filesystem::path& root, const std::string& city, const std::string& sequence_id,
                         const std::vector<ModalitySpec>& modalities, const TokenLayout& layout);

// Writes every frame of a record in the on-disk format (8-bit PNG when labels fit, else 16-bit).
void write_record(const std::filesystem::path& root, const SequenceRecord& record);

}  // namespace futurist
