#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "futurist/datasets.hpp"
#include "futurist/errors.hpp"
#include "futurist/png_io.hpp"
#include "helpers.hpp"

using namespace futurist;
namespace fs = std::filesystem;

namespace {

SyntheticShape rect(int label, int bin, int x, int y, int dx, int dy, int w, int h) {
  SyntheticShape s;
  s.kind = ShapeKind::kRectangle;
  s.semantic_label = label;
  s.depth_bin = bin;
  s.x = x;
  s.y = y;
  s.dx = dx;
  s.dy = dy;
  s.width = w;
  s.height = h;
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("futurist_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("empty scene renders background everywhere") {
  SyntheticSceneSpec spec;
  spec.height = 16;
  spec.width = 32;
  const auto rec = render_synthetic(spec, {0, 3, 6});
  const auto& seg = rec.get(kSegmentation);
  const auto& depth = rec.get(kDepth);
  for (std::size_t i = 0; i < seg.labels.size(); ++i) {
    CHECK(seg.labels[i] == spec.background_label);
    CHECK(depth.labels[i] == spec.background_depth_bin);
  }
}

TEST_CASE("a moving rectangle is translated by t times its velocity") {
  SyntheticSceneSpec spec;
  spec.height = 32;
  spec.width = 64;
  spec.shapes = {rect(13, 50, 5, 10, 3, 0, 8, 8)};
  const auto rec = render_synthetic(spec, {0, 3});
  const auto& seg = rec.get(kSegmentation);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const int back = (x - 9 + spec.width) % spec.width;
      CHECK(seg.at(1, y, x) == seg.at(0, y, back));
    }
  }
  CHECK(seg.at(0, 10, 5) == 13);
  CHECK(seg.at(1, 10, 14) == 13);
  CHECK(seg.at(1, 10, 13) == spec.background_label);
}

TEST_CASE("motion wraps toroidally") {
  SyntheticSceneSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.shapes = {rect(11, 20, 12, 2, 2, 1, 6, 3)};
  const auto rec = render_synthetic(spec, {0, 1, 2, 10});
  const auto& seg = rec.get(kSegmentation);
  for (int f = 0; f < 4; ++f) {
    int count = 0;
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) count += seg.at(f, y, x) == 11;
    }
    CHECK(count == 18);
  }
  CHECK(seg.at(1, 3, 0) == 11);  // x = 12 + 2 + 2 = 16 -> 0
}

TEST_CASE("nearer shapes occlude farther ones in both modalities") {
  SyntheticSceneSpec spec;
  spec.height = 32;
  spec.width = 32;
  // larger disparity bin = nearer
  spec.shapes = {rect(11, 200, 10, 10, 0, 0, 12, 12), rect(13, 10, 4, 4, 0, 0, 12, 12)};
  const auto rec = render_synthetic(spec, {0});
  const auto& seg = rec.get(kSegmentation);
  const auto& depth = rec.get(kDepth);
  CHECK(seg.at(0, 12, 12) == 11);
  CHECK(depth.at(0, 12, 12) == 200);
  CHECK(seg.at(0, 5, 5) == 13);
  CHECK(depth.at(0, 5, 5) == 10);
}

TEST_CASE("random scenes: deterministic and cross-modally consistent") {
  SceneDistribution dist;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = sample_scene(dist, seed);
    CHECK(spec == sample_scene(dist, seed));
    const auto a = render_synthetic(spec, {0, 3, 6, 9, 12});
    const auto b = render_synthetic(spec, {0, 3, 6, 9, 12});
    CHECK(a == b);
    const auto& seg = a.get(kSegmentation);
    const auto& depth = a.get(kDepth);
    for (const auto& s : spec.shapes) {
      for (std::size_t i = 0; i < seg.labels.size(); ++i) {
        // every pixel showing this shape's bin also shows its label (bins are distinct per scene)
        if (depth.labels[i] == s.depth_bin) CHECK(seg.labels[i] == s.semantic_label);
      }
    }
  }
}

TEST_CASE("shapes larger than the canvas are rejected") {
  SyntheticSceneSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.shapes = {rect(13, 5, 0, 0, 0, 0, 9, 2)};
  CHECK_THROWS_AS(render_synthetic(spec, {0}), ShapeError);
}

TEST_CASE("depth quantization") {
  const double v[] = {0.0, 1.0, 0.5};
  const auto b = quantize_depth(v, 256);
  CHECK(b[0] == 0);
  CHECK(b[1] == 255);
  CHECK(b[2] == 128);
  CHECK(dequantize_depth(128, 256) == 0.501953125);
  const double bad[] = {1.5};
  CHECK_THROWS_AS(quantize_depth(bad, 256), RangeError);

  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double x[] = {rng.uniform()};
    const int bins = 2 + static_cast<int>(rng.below(300));
    const auto q = quantize_depth(x, bins);
    CHECK(std::abs(dequantize_depth(q[0], bins) - x[0]) <= 0.5 / bins + 1e-15);
  }
}

TEST_CASE("context frame indices") {
  CHECK(context_frame_indices(20, Horizon::kShort, 4) == std::vector<int>{8, 11, 14, 17});
  CHECK(context_frame_indices(20, Horizon::kMid, 4) == std::vector<int>{2, 5, 8, 11});
  CHECK(context_frame_indices(20, Horizon::kShort, 2) == std::vector<int>{14, 17});
  CHECK(rollout_steps(Horizon::kShort) == 1);
  CHECK(rollout_steps(Horizon::kMid) == 3);
}

TEST_CASE("nearest-neighbour resampling keeps labels and inverts integer upscaling") {
  Rng rng(2);
  const LabelArray src = testing::random_labels(4 * 6, 19, rng);
  const LabelArray up = resize_nearest(src, 4, 6, 12, 18, 19);
  const LabelArray down = resize_nearest(up, 12, 18, 4, 6, 19);
  CHECK(down == src);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 18; ++x) CHECK(up[y * 18 + x] == src[(y / 3) * 6 + x / 3]);
  }
}

TEST_CASE("on-disk round trip, downscaling and missing-file errors") {
  const fs::path root = scratch("datasets");
  SyntheticSceneSpec spec;
  spec.height = 128;
  spec.width = 256;
  spec.shapes = {rect(13, 40, 10, 20, 3, 0, 32, 16)};
  std::vector<int> frames(21);
  for (int i = 0; i < 21; ++i) frames[i] = i;
  SequenceRecord rec = render_synthetic(spec, frames);
  rec.sequence_id = "000007";
  write_record(root, rec);
  CHECK(fs::exists(root / "synth" / "synth_000007_000020_segmentation.png"));
  CHECK(read_png_gray(label_path(root, "synth", "000007", 3, kDepth)).bit_depth == 8);

  TokenLayout layout{5, 4, 1, 64, 128, 16};
  const std::vector<ModalitySpec> mods = {segmentation_modality(64), depth_modality(64)};
  const SequenceRecord ctx = load_sequence(root, "synth", "000007", 20, Horizon::kShort, layout, mods);
  CHECK(ctx.num_frames() == 4);
  CHECK(ctx.height() == 64);
  CHECK(ctx.get(kSegmentation).frame_indices == std::vector<int>{8, 11, 14, 17});
  const auto& full = rec.get(kSegmentation);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 128; ++x) CHECK(ctx.get(kSegmentation).at(0, y, x) == full.at(8, 2 * y + 1, 2 * x + 1));
  }

  const SequenceRecord clip = load_clip(root, "synth", "000007", mods, layout);
  CHECK(clip.num_frames() == 21);

  try {
    load_sequence(root, "synth", "000008", 20, Horizon::kShort, layout, mods);
    FAIL("expected a load error");
  } catch (const LoadError& e) {
    CHECK(e.path().find("synth_000008_000008_segmentation.png") != std::string::npos);
  }

  std::vector<ManifestEntry> manifest = {{"synth", "000007", 20}, {"synth", "x", 29}};
  write_manifest(root / "val.txt", manifest);
  CHECK(read_manifest(root / "val.txt") == manifest);
  fs::remove_all(root);
}

TEST_CASE("16-bit label files round-trip") {
  const fs::path root = scratch("wide");
  FrameSequence s;
  s.modality = depth_modality(64, 1024);
  s.height = 2;
  s.width = 3;
  s.labels = testing::labels_of({0, 1, 1000, 1023, 512, 7}, 1024);
  s.frame_indices = {4};
  SequenceRecord r;
  r.city = "c";
  r.sequence_id = "s";
  r.modalities = {s};
  write_record(root, r);
  CHECK(read_png_gray(label_path(root, "c", "s", 4, kDepth)).bit_depth == 16);
  const FrameSequence back = load_frame(root, "c", "s", 4, s.modality);
  CHECK(back.labels == s.labels);
  fs::remove_all(root);
}
