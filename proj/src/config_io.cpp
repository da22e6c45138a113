#include "futurist/config_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "futurist/errors.hpp"

namespace futurist {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("invalid numeric value '" + value + "' for key " + key);
  }
  return out;
}

int parse_int(const std::string& key, const std::string& value) { return parse_number<int>(key, value); }
double parse_real(const std::string& key, const std::string& value) { return parse_number<double>(key, value); }

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  return out;
}

void apply_modality_setting(ModalitySpec& m, const std::string& field, const std::string& key,
                            const std::string& value) {
  if (field == "name") {
    m.name = value;
  } else if (field == "num_labels") {
    m.num_labels = parse_int(key, value);
  } else if (field == "pixel_embed_dim") {
    m.pixel_embed_dim = parse_int(key, value);
  } else if (field == "token_embed_dim") {
    m.token_embed_dim = parse_int(key, value);
  } else if (field == "loss_weight") {
    m.loss_weight = parse_real(key, value);
  } else if (field == "movable_label_ids") {
    m.movable_label_ids = parse_int_list(key, value);
  } else {
    throw ConfigError("unknown config key " + key);
  }
}

}  // namespace

void apply_setting(ModelConfig& cfg, const std::string& key, const std::string& value) {
  if (key.rfind("modalities.", 0) == 0) {
    const std::string rest = key.substr(11);
    const auto dot = rest.find('.');
    if (dot == std::string::npos) throw ConfigError("unknown config key " + key);
    const int index = parse_int(key, rest.substr(0, dot));
    if (index < 0 || index > 64) throw ConfigError("modality index out of range in key " + key);
    if (static_cast<std::size_t>(index) >= cfg.modalities.size()) cfg.modalities.resize(index + 1);
    apply_modality_setting(cfg.modalities[index], rest.substr(dot + 1), key, value);
    return;
  }
  auto& l = cfg.layout;
  auto& o = cfg.optimizer;
  if (key == "layout.frames") l.frames = parse_int(key, value);
  else if (key == "layout.context_frames") l.context_frames = parse_int(key, value);
  else if (key == "layout.future_frames") l.future_frames = parse_int(key, value);
  else if (key == "layout.height") l.height = parse_int(key, value);
  else if (key == "layout.width") l.width = parse_int(key, value);
  else if (key == "layout.patch") l.patch = parse_int(key, value);
  else if (key == "hidden_dim") cfg.hidden_dim = parse_int(key, value);
  else if (key == "num_layers") cfg.num_layers = parse_int(key, value);
  else if (key == "num_heads") cfg.num_heads = parse_int(key, value);
  else if (key == "fusion") cfg.fusion = parse_fusion(value);
  else if (key == "masking_strategy") cfg.masking_strategy = parse_masking_strategy(value);
  else if (key == "schedule") cfg.schedule = parse_schedule(value);
  else if (key == "optimizer.learning_rate") o.learning_rate = parse_real(key, value);
  else if (key == "optimizer.beta1") o.beta1 = parse_real(key, value);
  else if (key == "optimizer.beta2") o.beta2 = parse_real(key, value);
  else if (key == "optimizer.epsilon") o.epsilon = parse_real(key, value);
  else if (key == "optimizer.epochs") o.epochs = parse_int(key, value);
  else if (key == "optimizer.batch_size") o.batch_size = parse_int(key, value);
  else if (key == "optimizer.warmup_steps") o.warmup_steps = parse_int(key, value);
  else if (key == "optimizer.grad_clip") o.grad_clip = parse_real(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "subsample") cfg.subsample = parse_int(key, value);
  else if (key == "absrel_denominator") cfg.absrel_denominator = parse_absrel_denominator(value);
  else throw ConfigError("unknown config key " + key);
}

std::string serialize_config(const ModelConfig& cfg) {
  std::ostringstream os;
  const auto& l = cfg.layout;
  const auto& o = cfg.optimizer;
  os << "# futurist model configuration\n";
  os << "layout.frames = " << l.frames << "\n";
  os << "layout.context_frames = " << l.context_frames << "\n";
  os << "layout.future_frames = " << l.future_frames << "\n";
  os << "layout.height = " << l.height << "\n";
  os << "layout.width = " << l.width << "\n";
  os << "layout.patch = " << l.patch << "\n";
  for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
    const auto& m = cfg.modalities[i];
    const std::string p = "modalities." + std::to_string(i) + ".";
    os << p << "name = " << m.name << "\n";
    os << p << "num_labels = " << m.num_labels << "\n";
    os << p << "pixel_embed_dim = " << m.pixel_embed_dim << "\n";
    os << p << "token_embed_dim = " << m.token_embed_dim << "\n";
    os << p << "loss_weight = " << format_real(m.loss_weight) << "\n";
    os << p << "movable_label_ids = ";
    for (std::size_t j = 0; j < m.movable_label_ids.size(); ++j) {
      os << (j ? "," : "") << m.movable_label_ids[j];
    }
    os << "\n";
  }
  os << "hidden_dim = " << cfg.hidden_dim << "\n";
  os << "num_layers = " << cfg.num_layers << "\n";
  os << "num_heads = " << cfg.num_heads << "\n";
  os << "fusion = " << to_string(cfg.fusion) << "\n";
  os << "masking_strategy = " << to_string(cfg.masking_strategy) << "\n";
  os << "schedule = " << to_string(cfg.schedule) << "\n";
  os << "optimizer.learning_rate = " << format_real(o.learning_rate) << "\n";
  os << "optimizer.beta1 = " << format_real(o.beta1) << "\n";
  os << "optimizer.beta2 = " << format_real(o.beta2) << "\n";
  os << "optimizer.epsilon = " << format_real(o.epsilon) << "\n";
  os << "optimizer.epochs = " << o.epochs << "\n";
  os << "optimizer.batch_size = " << o.batch_size << "\n";
  os << "optimizer.warmup_steps = " << o.warmup_steps << "\n";
  os << "optimizer.grad_clip = " << format_real(o.grad_clip) << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "subsample = " << cfg.subsample << "\n";
  os << "absrel_denominator = " << to_string(cfg.absrel_denominator) << "\n";
  return os.str();
}

ModelConfig parse_config(const std::string& text, const ModelConfig& base) {
  ModelConfig cfg = base;
  bool modalities_reset = false;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("modalities.", 0) == 0 && !modalities_reset) {
      cfg.modalities.clear();
      modalities_reset = true;
    }
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ModelConfig load_config(const std::filesystem::path& path, const ModelConfig& base) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

void save_config(const ModelConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << serialize_config(cfg);
}

}  // namespace futurist
