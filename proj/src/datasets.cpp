#include "futurist/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "futurist/errors.hpp"
#include "futurist/png_io.hpp"
#include "futurist/rng.hpp"

namespace futurist {

bool SyntheticShape::covers(int u, int v) const {
  if (u < 0 || v < 0 || u >= box_width() || v >= box_height()) return false;
  if (kind == ShapeKind::kRectangle) return true;
  const int du = u - radius;
  const int dv = v - radius;
  return du * du + dv * dv <= radius * radius;
}

namespace {

int wrap(long long v, int n) {
  const long long r = v % n;
  return static_cast<int>(r < 0 ? r + n : r);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

SyntheticSceneSpec sample_scene(const SceneDistribution& dist, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5CE9E));
  SyntheticSceneSpec spec;
  spec.height = dist.height;
  spec.width = dist.width;
  spec.background_label = dist.background_label;
  spec.background_depth_bin = dist.background_depth_bin;
  spec.seed = seed;

  auto random_box = [&](SyntheticShape& s) {
    s.kind = rng.below(2) == 0 ? ShapeKind::kRectangle : ShapeKind::kDisc;
    s.width = uniform_int(rng, dist.min_size, dist.max_size);
    s.height = uniform_int(rng, dist.min_size, dist.max_size);
    s.radius = uniform_int(rng, dist.min_size, dist.max_size) / 2;
    s.x = uniform_int(rng, 0, dist.width - 1);
    s.y = uniform_int(rng, 0, dist.height - 1);
  };

  const int count = uniform_int(rng, dist.min_shapes, dist.max_shapes);
  std::vector<int> bins;
  for (int i = 0; i < count; ++i) {
    SyntheticShape s;
    random_box(s);
    s.semantic_label = dist.moving_labels[rng.below(dist.moving_labels.size())];
    do {
      s.dx = uniform_int(rng, -dist.max_speed_x, dist.max_speed_x);
      s.dy = uniform_int(rng, -dist.max_speed_y, dist.max_speed_y);
    } while (s.dx == 0 && s.dy == 0);
    // distinct bins keep the occlusion order unambiguous
    do {
      s.depth_bin = uniform_int(rng, dist.min_depth_bin, dist.max_depth_bin);
    } while (std::find(bins.begin(), bins.end(), s.depth_bin) != bins.end());
    bins.push_back(s.depth_bin);
    spec.shapes.push_back(s);
  }
  if (rng.uniform() < dist.static_shape_probability) {
    SyntheticShape s;
    random_box(s);
    s.kind = ShapeKind::kRectangle;
    s.semantic_label = dist.static_label;
    s.dx = 0;
    s.dy = 0;
    // between the background and the nearest-possible mover's range, so movers pass in front
    s.depth_bin = dist.background_depth_bin + 1 +
                  static_cast<int>(rng.below(std::max(1, dist.min_depth_bin - dist.background_depth_bin - 1)));
    spec.shapes.push_back(s);
  }
  return spec;
}

SceneDistribution parse_scene_distribution(const std::string& text) {
  SceneDistribution d;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("scene spec: expected 'key = value' in '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto as_int = [&]() {
      int v = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw ConfigError("scene spec: invalid integer for " + key);
      }
      return v;
    };
    if (key == "height") d.height = as_int();
    else if (key == "width") d.width = as_int();
    else if (key == "min_shapes") d.min_shapes = as_int();
    else if (key == "max_shapes") d.max_shapes = as_int();
    else if (key == "min_size") d.min_size = as_int();
    else if (key == "max_size") d.max_size = as_int();
    else if (key == "max_speed_x") d.max_speed_x = as_int();
    else if (key == "max_speed_y") d.max_speed_y = as_int();
    else if (key == "min_depth_bin") d.min_depth_bin = as_int();
    else if (key == "max_depth_bin") d.max_depth_bin = as_int();
    else if (key == "background_label") d.background_label = as_int();
    else if (key == "background_depth_bin") d.background_depth_bin = as_int();
    else if (key == "static_label") d.static_label = as_int();
    else if (key == "static_shape_probability") {
      double v = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
      if (res.ec != std::errc()) throw ConfigError("scene spec: invalid real for " + key);
      d.static_shape_probability = v;
    } else if (key == "moving_labels") {
      d.moving_labels.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) d.moving_labels.push_back(std::stoi(trim(item)));
    } else {
      throw ConfigError("scene spec: unknown key " + key);
    }
  }
  if (d.min_shapes < 0 || d.max_shapes < d.min_shapes) throw ConfigError("scene spec: bad shape count range");
  if (d.min_size < 1 || d.max_size < d.min_size) throw ConfigError("scene spec: bad size range");
  if (d.moving_labels.empty() && d.max_shapes > 0) throw ConfigError("scene spec: moving_labels is empty");
  if (d.max_depth_bin - d.min_depth_bin + 1 < d.max_shapes) throw ConfigError("scene spec: depth bin range too narrow");
  if (d.background_depth_bin >= d.min_depth_bin) throw ConfigError("scene spec: background must be farther than every mover");
  return d;
}

SceneDistribution load_scene_distribution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), "cannot open scene spec");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_distribution(ss.str());
}

std::string serialize_scene_distribution(const SceneDistribution& d) {
  std::ostringstream os;
  os << "height = " << d.height << "\nwidth = " << d.width << "\nmin_shapes = " << d.min_shapes
     << "\nmax_shapes = " << d.max_shapes << "\nmin_size = " << d.min_size << "\nmax_size = " << d.max_size
     << "\nmax_speed_x = " << d.max_speed_x << "\nmax_speed_y = " << d.max_speed_y
     << "\nmin_depth_bin = " << d.min_depth_bin << "\nmax_depth_bin = " << d.max_depth_bin
     << "\nbackground_label = " << d.background_label << "\nbackground_depth_bin = " << d.background_depth_bin
     << "\nstatic_shape_probability = " << d.static_shape_probability << "\nstatic_label = " << d.static_label
     << "\nmoving_labels = ";
  for (std::size_t i = 0; i < d.moving_labels.size(); ++i) os << (i ? "," : "") << d.moving_labels[i];
  os << "\n";
  return os.str();
}

const FrameSequence& SequenceRecord::get(const std::string& name) const {
  for (const auto& m : modalities) {
    if (m.modality.name == name) return m;
  }
  throw ContractError("sequence record has no modality named " + name);
}

FrameSequence& SequenceRecord::get(const std::string& name) {
  return const_cast<FrameSequence&>(static_cast<const SequenceRecord&>(*this).get(name));
}

SequenceRecord SequenceRecord::frames(int first, int count) const {
  SequenceRecord out;
  out.city = city;
  out.sequence_id = sequence_id;
  out.subsample = subsample;
  for (const auto& m : modalities) out.modalities.push_back(m.frames(first, count));
  return out;
}

void check_sequence_record(const SequenceRecord& record) {
  if (record.modalities.empty()) throw ShapeError("sequence record has no modalities");
  const auto& first = record.modalities.front();
  for (const auto& m : record.modalities) {
    if (m.height != first.height || m.width != first.width || m.frame_indices != first.frame_indices) {
      throw ShapeError("modalities of a sequence record disagree on N, H, W or frame indices");
    }
  }
}

SequenceRecord render_synthetic(const SyntheticSceneSpec& spec, const std::vector<int>& frame_indices) {
  for (std::size_t i = 0; i < frame_indices.size(); ++i) {
    if (frame_indices[i] < 0) throw RangeError("frame indices must be nonnegative");
    if (i > 0 && frame_indices[i] <= frame_indices[i - 1]) throw RangeError("frame indices must be strictly increasing");
  }
  for (const auto& s : spec.shapes) {
    if (s.box_width() > spec.width || s.box_height() > spec.height || s.box_width() < 1 || s.box_height() < 1) {
      throw ShapeError("synthetic shape larger than the canvas");
    }
  }

  // bins are disparities: far (small) shapes first so nearer ones overwrite them; stable on ties
  std::vector<std::size_t> order(spec.shapes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return spec.shapes[a].depth_bin < spec.shapes[b].depth_bin; });

  const int n = static_cast<int>(frame_indices.size());
  const std::size_t per = static_cast<std::size_t>(spec.height) * spec.width;
  FrameSequence seg;
  seg.modality = ModalitySpec{kSegmentation, spec.num_labels, 10, 64, 1.0, cityscapes_movable_ids()};
  seg.height = spec.height;
  seg.width = spec.width;
  seg.frame_indices = frame_indices;
  seg.labels = LabelArray(per * n, spec.num_labels);
  FrameSequence depth = seg;
  depth.modality = ModalitySpec{kDepth, spec.num_depth_bins, 10, 64, 1.0, {}};
  depth.labels = LabelArray(per * n, spec.num_depth_bins);

  for (int f = 0; f < n; ++f) {
    const long long t = frame_indices[f];
    const std::size_t base = per * f;
    for (std::size_t i = 0; i < per; ++i) {
      seg.labels.set(base + i, static_cast<std::uint16_t>(spec.background_label));
      depth.labels.set(base + i, static_cast<std::uint16_t>(spec.background_depth_bin));
    }
    for (const std::size_t idx : order) {
      const auto& s = spec.shapes[idx];
      const long long ox = s.x + t * s.dx;
      const long long oy = s.y + t * s.dy;
      for (int v = 0; v < s.box_height(); ++v) {
        const int py = wrap(oy + v, spec.height);
        for (int u = 0; u < s.box_width(); ++u) {
          if (!s.covers(u, v)) continue;
          const int px = wrap(ox + u, spec.width);
          const std::size_t p = base + static_cast<std::size_t>(py) * spec.width + px;
          seg.labels.set(p, static_cast<std::uint16_t>(s.semantic_label));
          depth.labels.set(p, static_cast<std::uint16_t>(s.depth_bin));
        }
      }
    }
  }

  SequenceRecord record;
  record.city = "synth";
  record.sequence_id = std::to_string(spec.seed);
  record.subsample = frame_indices.size() > 1 ? frame_indices[1] - frame_indices[0] : 1;
  record.modalities.push_back(std::move(seg));
  record.modalities.push_back(std::move(depth));
  return record;
}

std::vector<std::uint16_t> quantize_depth(std::span<const double> disparity, int num_bins) {
  if (num_bins < 2) throw RangeError("num_bins must be >= 2");
  std::vector<std::uint16_t> out(disparity.size());
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    const double v = disparity[i];
    if (!(v >= 0.0 && v <= 1.0)) throw RangeError("disparity value outside [0, 1]");
    out[i] = static_cast<std::uint16_t>(std::min(static_cast<int>(std::floor(v * num_bins)), num_bins - 1));
  }
  return out;
}

double dequantize_depth(int bin, int num_bins) { return (bin + 0.5) / num_bins; }

int rollout_steps(Horizon horizon) { return horizon == Horizon::kShort ? 1 : 3; }

std::string to_string(Horizon horizon) { return horizon == Horizon::kShort ? "short" : "mid"; }

Horizon parse_horizon(const std::string& s) {
  if (s == "short" || s == "SHORT") return Horizon::kShort;
  if (s == "mid" || s == "MID") return Horizon::kMid;
  throw ConfigError("unknown horizon '" + s + "' (expected short or mid)");
}

std::vector<int> context_frame_indices(int target_frame, Horizon horizon, int context_frames, int subsample) {
  const int last = target_frame - subsample * rollout_steps(horizon);
  std::vector<int> out(context_frames);
  for (int i = 0; i < context_frames; ++i) out[i] = last - subsample * (context_frames - 1 - i);
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), "cannot open manifest");
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.city >> e.sequence_id >> e.target_frame)) {
      throw LoadError(path.string(), "malformed manifest line " + std::to_string(line_no));
    }
    out.push_back(e);
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string(), "cannot write manifest");
  for (const auto& e : entries) out << e.city << ' ' << e.sequence_id << ' ' << e.target_frame << '\n';
  if (!out) throw LoadError(path.string(), "cannot write manifest");
}

std::filesystem::path label_path(const std::filesystem::path& root, const std::string& city,
                                 const std::string& sequence_id, int frame, const std::string& modality) {
  char frame_buf[16];
  std::snprintf(frame_buf, sizeof(frame_buf), "%06d", frame);
  return root / city / (city + "_" + sequence_id + "_" + frame_buf + "_" + modality + ".png");
}

LabelArray resize_nearest(const LabelArray& src, int src_h, int src_w, int dst_h, int dst_w, int num_labels) {
  if (src.size() != static_cast<std::size_t>(src_h) * src_w) throw ShapeError("label map size mismatch");
  if (src_h == dst_h && src_w == dst_w) return src;
  LabelArray out(static_cast<std::size_t>(dst_h) * dst_w, num_labels);
  for (int y = 0; y < dst_h; ++y) {
    const int sy = std::min(src_h - 1, static_cast<int>((static_cast<long long>(2 * y + 1) * src_h) / (2LL * dst_h)));
    for (int x = 0; x < dst_w; ++x) {
      const int sx = std::min(src_w - 1, static_cast<int>((static_cast<long long>(2 * x + 1) * src_w) / (2LL * dst_w)));
      out.set(static_cast<std::size_t>(y) * dst_w + x, src[static_cast<std::size_t>(sy) * src_w + sx]);
    }
  }
  return out;
}

FrameSequence load_frame(const std::filesystem::path& root, const std::string& city, const std::string& sequence_id,
                         int frame, const ModalitySpec& modality, bool allow_ignore) {
  const auto path = label_path(root, city, sequence_id, frame, modality.name);
  const GrayImage image = read_png_gray(path);
  FrameSequence seq;
  seq.modality = modality;
  seq.height = image.height;
  seq.width = image.width;
  seq.frame_indices = {frame};
  // ignore ids may exceed the modality alphabet, so size storage for them too
  seq.labels = LabelArray(image.pixels.size(), allow_ignore ? std::max(modality.num_labels, kIgnoreLabel + 1)
                                                            : modality.num_labels);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const int v = image.pixels[i];
    if (v >= modality.num_labels && !(allow_ignore && v == kIgnoreLabel)) {
      throw LoadError(path.string(), "label " + std::to_string(v) + " outside the alphabet of " + modality.name);
    }
    seq.labels.set(i, static_cast<std::uint16_t>(v));
  }
  return seq;
}

SequenceRecord load_frames(const std::filesystem::path& root, const std::string& city, const std::string& sequence_id,
                           const std::vector<int>& frame_indices, const std::vector<ModalitySpec>& modalities,
                           const TokenLayout& layout, int subsample) {
  SequenceRecord record;
  record.city = city;
  record.sequence_id = sequence_id;
  record.subsample = subsample;
  for (const auto& m : modalities) {
    FrameSequence seq;
    seq.modality = m;
    seq.height = layout.height;
    seq.width = layout.width;
    seq.frame_indices = frame_indices;
    seq.labels = LabelArray(0, m.num_labels);
    for (const int f : frame_indices) {
      if (f < 0) throw LoadError(label_path(root, city, sequence_id, f, m.name).string(), "negative frame index");
      const FrameSequence one = load_frame(root, city, sequence_id, f, m);
      seq.labels.append(resize_nearest(one.labels, one.height, one.width, layout.height, layout.width, m.num_labels));
    }
    record.modalities.push_back(std::move(seq));
  }
  return record;
}

SequenceRecord load_sequence(const std::filesystem::path& root, const std::string& city,
                             const std::string& sequence_id, int target_frame, Horizon horizon,
                             const TokenLayout& layout, const std::vector<ModalitySpec>& modalities, int subsample) {
  return load_frames(root, city, sequence_id,
                     context_frame_indices(target_frame, horizon, layout.context_frames, subsample), modalities, layout,
                     subsample);
}

SequenceRecord load_clip(const std::filesystem::path& root, const std::string& city, const std::string& sequence_id,
                         const std::vector<ModalitySpec>& modalities, const TokenLayout& layout) {
  if (modalities.empty()) throw ContractError("load_clip needs at least one modality");
  std::vector<int> frames;
  while (std::filesystem::exists(label_path(root, city, sequence_id, static_cast<int>(frames.size()),
                                            modalities.front().name))) {
    frames.push_back(static_cast<int>(frames.size()));
  }
  if (frames.empty()) {
    throw LoadError(label_path(root, city, sequence_id, 0, modalities.front().name).string(), "missing frame file");
  }
  return load_frames(root, city, sequence_id, frames, modalities, layout, 1);
}

void write_record(const std::filesystem::path& root, const SequenceRecord& record) {
  std::filesystem::create_directories(root / record.city);
  for (const auto& m : record.modalities) {
    for (int f = 0; f < m.num_frames(); ++f) {
      GrayImage image;
      image.width = m.width;
      image.height = m.height;
      image.bit_depth = m.modality.num_labels <= 256 ? 8 : 16;
      const LabelArray frame = m.frame(f);
      image.pixels.resize(frame.size());
      for (std::size_t i = 0; i < frame.size(); ++i) image.pixels[i] = frame[i];
      write_png_gray(label_path(root, record.city, record.sequence_id, m.frame_indices[f], m.modality.name), image);
    }
  }
}

}  // namespace futurist
