#include "futurist/visualize.hpp"

#include <algorithm>
#include <cmath>

#include "futurist/errors.hpp"
#include "futurist/png_io.hpp"

namespace futurist {

namespace {

constexpr Rgb kPalette[19] = {
    {128, 64, 128}, {244, 35, 232}, {70, 70, 70},   {102, 102, 156}, {190, 153, 153}, {153, 153, 153}, {250, 170, 30},
    {220, 220, 0},  {107, 142, 35}, {152, 251, 152}, {70, 130, 180},  {220, 20, 60},   {255, 0, 0},     {0, 0, 142},
    {0, 0, 70},     {0, 60, 100},   {0, 80, 100},    {0, 0, 230},     {119, 11, 32},
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Rgb cityscapes_color(int label) {
  if (label < 0 || label >= 19) return {0, 0, 0};
  return kPalette[label];
}

std::optional<int> cityscapes_label(const Rgb& color) {
  for (int i = 0; i < 19; ++i) {
    if (kPalette[i] == color) return i;
  }
  return std::nullopt;
}

Rgb turbo_color(double t) {
  // polynomial fit of the Turbo colormap
  t = std::clamp(t, 0.0, 1.0);
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  const double r = 0.13572138 + 4.61539260 * t - 42.66032258 * t2 + 132.13108234 * t3 - 152.94239396 * t4 +
                   59.28637943 * t5;
  const double g = 0.09140261 + 2.19418839 * t + 4.84296658 * t2 - 14.18503333 * t3 + 4.27729857 * t4 +
                   2.82956604 * t5;
  const double b = 0.10667330 + 12.64194608 * t - 60.58204836 * t2 + 110.36276771 * t3 - 89.90310912 * t4 +
                   27.34824973 * t5;
  return {to_byte(r), to_byte(g), to_byte(b)};
}

std::vector<std::uint8_t> colorize_segmentation(const LabelArray& labels) {
  std::vector<std::uint8_t> rgb;
  rgb.reserve(labels.size() * 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Rgb c = cityscapes_color(labels[i]);
    rgb.insert(rgb.end(), c.begin(), c.end());
  }
  return rgb;
}

std::vector<std::uint8_t> colorize_depth(const LabelArray& bins, int num_bins) {
  std::vector<std::uint8_t> rgb;
  rgb.reserve(bins.size() * 3);
  const double scale = num_bins > 1 ? 1.0 / (num_bins - 1) : 1.0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const Rgb c = turbo_color(bins[i] * scale);
    rgb.insert(rgb.end(), c.begin(), c.end());
  }
  return rgb;
}

void write_colorized(const std::filesystem::path& path, const FrameSequence& seq, int frame) {
  if (frame < 0 || frame >= seq.num_frames()) throw RangeError("frame outside the sequence");
  const LabelArray labels = seq.frame(frame);
  const auto rgb = seq.modality.name == kDepth ? colorize_depth(labels, seq.modality.num_labels)
                                               : colorize_segmentation(labels);
  write_png_rgb(path, seq.width, seq.height, rgb);
}

void write_label_png(const std::filesystem::path& path, const FrameSequence& seq, int frame) {
  if (frame < 0 || frame >= seq.num_frames()) throw RangeError("frame outside the sequence");
  const LabelArray labels = seq.frame(frame);
  GrayImage image;
  image.width = seq.width;
  image.height = seq.height;
  image.bit_depth = seq.modality.num_labels <= 256 ? 8 : 16;
  image.pixels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) image.pixels[i] = labels[i];
  write_png_gray(path, image);
}

}  // namespace futurist
