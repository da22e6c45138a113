#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "futurist/core_types.hpp"
#include "futurist/model.hpp"

namespace futurist {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  ModelConfig config;
  Model<float> model;
  // Adam moments, aligned with model.parameters().
  std::vector<Matrix<float>> first_moments;
  std::vector<Matrix<float>> second_moments;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::int64_t total_steps = 0;
  std::string rng_state;
};

// Freshly initialized model, zero moments, step 0.
Checkpoint initial_checkpoint(const ModelConfig& cfg);

// Layout: 8-byte magic, u64 header length, JSON header (version, config text, counters,
// tensor manifest with offsets/dtypes/shapes, payload CRC-32), then raw little-endian floats.
std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError on a bad magic, truncated or corrupted data, or a version mismatch.
Checkpoint parse_checkpoint(std::string_view bytes);

// Writes through a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace futurist
