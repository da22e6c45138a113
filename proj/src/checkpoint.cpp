#include "futurist/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "futurist/config_io.hpp"
#include "futurist/errors.hpp"

namespace futurist {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written in host byte order");

namespace {

constexpr char kMagic[8] = {'F', 'U', 'T', 'R', 'C', 'K', 'P', 'T'};

using nlohmann::json;

struct TensorRef {
  std::string name;
  const Matrix<float>* data;
};

std::vector<TensorRef> tensor_list(const Checkpoint& c) {
  std::vector<TensorRef> out;
  const auto params = c.model.parameters();
  for (const auto* p : params) out.push_back({"param/" + p->name, &p->value});
  for (std::size_t i = 0; i < params.size() && i < c.first_moments.size(); ++i) {
    out.push_back({"adam_m/" + params[i]->name, &c.first_moments[i]});
  }
  for (std::size_t i = 0; i < params.size() && i < c.second_moments.size(); ++i) {
    out.push_back({"adam_v/" + params[i]->name, &c.second_moments[i]});
  }
  return out;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view s) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
  return v;
}

}  // namespace

Checkpoint initial_checkpoint(const ModelConfig& cfg) {
  Checkpoint c;
  c.config = cfg;
  c.model = Model<float>(cfg);
  for (const auto* p : c.model.parameters()) {
    c.first_moments.emplace_back(p->value.rows(), p->value.cols());
    c.second_moments.emplace_back(p->value.rows(), p->value.cols());
  }
  c.rng_state = Rng(cfg.seed).state();
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto tensors = tensor_list(ckpt);
  std::string payload;
  json manifest = json::array();
  for (const auto& t : tensors) {
    const std::size_t bytes = t.data->size() * sizeof(float);
    manifest.push_back({{"name", t.name},
                        {"dtype", "f32"},
                        {"shape", {t.data->rows(), t.data->cols()}},
                        {"offset", payload.size()},
                        {"bytes", bytes}});
    payload.append(reinterpret_cast<const char*>(t.data->data()), bytes);
  }
  const json header = {{"format", "futurist-checkpoint"},
                       {"version", ckpt.version},
                       {"config", serialize_config(ckpt.config)},
                       {"step", ckpt.step},
                       {"epoch", ckpt.epoch},
                       {"total_steps", ckpt.total_steps},
                       {"rng_state", ckpt.rng_state},
                       {"tensors", manifest},
                       {"payload_bytes", payload.size()},
                       {"payload_crc32", crc32_of(payload)}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic or truncated preamble)");
  }
  const std::uint64_t header_len = get_u64(bytes.substr(8, 8));
  if (header_len > bytes.size() - 16) throw CheckpointError("checkpoint truncated inside the header");
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupted checkpoint header: ") + e.what());
  }

  Checkpoint c;
  try {
    if (header.at("format") != "futurist-checkpoint") throw CheckpointError("unknown checkpoint format");
    c.version = header.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw CheckpointError("incompatible checkpoint version " + std::to_string(c.version) + " (this build reads " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    const std::string_view payload = bytes.substr(16 + header_len);
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    if (payload.size() != payload_bytes) {
      throw CheckpointError("checkpoint payload has " + std::to_string(payload.size()) + " bytes, header says " +
                            std::to_string(payload_bytes));
    }
    if (crc32_of(payload) != header.at("payload_crc32").get<std::uint32_t>()) {
      throw CheckpointError("checkpoint payload checksum mismatch");
    }
    try {
      c.config = parse_config(header.at("config").get<std::string>());
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint config unreadable: ") + e.what());
    }
    c.step = header.at("step").get<std::int64_t>();
    c.epoch = header.at("epoch").get<std::int64_t>();
    c.total_steps = header.at("total_steps").get<std::int64_t>();
    c.rng_state = header.at("rng_state").get<std::string>();

    c.model = Model<float>(c.config);
    auto params = c.model.parameters();
    c.first_moments.clear();
    c.second_moments.clear();
    for (const auto* p : params) {
      c.first_moments.emplace_back(p->value.rows(), p->value.cols());
      c.second_moments.emplace_back(p->value.rows(), p->value.cols());
    }
    std::vector<Matrix<float>*> slots;
    std::vector<std::string> names;
    for (auto* p : params) {
      slots.push_back(&p->value);
      names.push_back("param/" + p->name);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots.push_back(&c.first_moments[i]);
      names.push_back("adam_m/" + params[i]->name);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots.push_back(&c.second_moments[i]);
      names.push_back("adam_v/" + params[i]->name);
    }
    const json& manifest = header.at("tensors");
    if (manifest.size() != slots.size()) throw CheckpointError("checkpoint tensor count does not match its config");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const json& entry = manifest[i];
      if (entry.at("name") != names[i]) {
        throw CheckpointError("checkpoint tensor " + std::to_string(i) + " is " +
                              entry.at("name").get<std::string>() + ", expected " + names[i]);
      }
      if (entry.at("dtype") != "f32") throw CheckpointError("unsupported dtype for " + names[i]);
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != slots[i]->rows() || shape[1] != slots[i]->cols()) {
        throw CheckpointError("shape mismatch for " + names[i]);
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto size = entry.at("bytes").get<std::uint64_t>();
      if (size != slots[i]->size() * sizeof(float) || offset > payload.size() || size > payload.size() - offset) {
        throw CheckpointError("tensor " + names[i] + " lies outside the payload");
      }
      std::memcpy(slots[i]->data(), payload.data() + offset, size);
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open checkpoint");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace futurist
