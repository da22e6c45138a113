#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "futurist/core_types.hpp"

namespace futurist {

using Rgb = std::array<std::uint8_t, 3>;

// Cityscapes train-id colours; ids outside 0..18 render black.
Rgb cityscapes_color(int label);
// Inverse of cityscapes_color over the 19 train ids.
std::optional<int> cityscapes_label(const Rgb& color);

// Turbo-style colormap for t in [0, 1] (clamped).
Rgb turbo_color(double t);

std::vector<std::uint8_t> colorize_segmentation(const LabelArray& labels);
std::vector<std::uint8_t> colorize_depth(const LabelArray& bins, int num_bins);

// Colour PNG of frame `frame` of a sequence: palette for depth-free modalities, turbo for depth.
void write_colorized(const std::filesystem::path& path, const FrameSequence& seq, int frame = 0);
// Label ids as a grey PNG (8-bit when they fit, else 16-bit).
void write_label_png(const std::filesystem::path& path, const FrameSequence& seq, int frame = 0);

}  // namespace futurist
