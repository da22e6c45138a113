// futurist: synthetic data generation, training, evaluation and rollout.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "futurist/checkpoint.hpp"
#include "futurist/config_io.hpp"
#include "futurist/datasets.hpp"
#include "futurist/errors.hpp"
#include "futurist/evaluation.hpp"
#include "futurist/inference.hpp"
#include "futurist/training.hpp"
#include "futurist/visualize.hpp"

namespace fs = std::filesystem;
using namespace futurist;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 3;

// Raised for problems the user can fix by changing flags or config.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> seed_from_env() {
  const char* s = std::getenv("FUTURIST_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw UsageError(std::string("FUTURIST_SEED is not an unsigned integer: ") + s);
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (auto env = seed_from_env()) return *env;
  return fallback;
}

void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".futurist_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw UsageError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

ModelConfig config_with_overrides(const std::string& config_path, const std::vector<std::string>& settings) {
  ModelConfig cfg = config_path.empty() ? desk_config() : load_config(config_path);
  for (const auto& kv : settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void require_valid(const ModelConfig& cfg) {
  const auto violations = validate_config(cfg);
  if (violations.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& v : violations) msg += "\n  " + v.field + ": " + v.constraint;
  throw UsageError(msg);
}

std::vector<SequenceRecord> load_clips(const fs::path& data, const fs::path& manifest_path, const ModelConfig& cfg) {
  const auto manifest = read_manifest(manifest_path);
  std::vector<SequenceRecord> clips;
  for (const auto& e : manifest) clips.push_back(load_clip(data, e.city, e.sequence_id, cfg.modalities, cfg.layout));
  return clips;
}

// ---- gen-data ----

struct GenArgs {
  std::string spec;
  std::string out;
  int num_sequences = 200;
  int frames = 30;
  int target = 20;
  std::optional<std::uint64_t> seed;
  std::string split = "train";
};

int run_gen_data(const GenArgs& a) {
  const SceneDistribution dist = a.spec.empty() ? SceneDistribution{} : load_scene_distribution(a.spec);
  if (a.frames < 1) throw UsageError("--frames must be >= 1");
  if (a.num_sequences < 0) throw UsageError("--num-sequences must be >= 0");
  const fs::path out(a.out);
  ensure_writable_dir(out);
  const std::uint64_t seed = resolve_seed(a.seed, 0);
  const int target = std::min(a.target, a.frames - 1);
  std::vector<int> frames(a.frames);
  for (int i = 0; i < a.frames; ++i) frames[i] = i;
  std::vector<ManifestEntry> manifest;
  for (int i = 0; i < a.num_sequences; ++i) {
    const SyntheticSceneSpec scene = sample_scene(dist, derive_seed(seed, 0, static_cast<std::uint64_t>(i)));
    SequenceRecord record = render_synthetic(scene, frames);
    char id[64];
    std::snprintf(id, sizeof(id), "%s%04d", a.split.c_str(), i);
    record.sequence_id = id;
    write_record(out, record);
    manifest.push_back({record.city, record.sequence_id, target});
  }
  write_manifest(out / (a.split + ".txt"), manifest);
  std::cout << "wrote " << manifest.size() << " sequences of " << a.frames << " frames to " << out.string() << '\n';
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string data;
  std::string manifest;
  std::string out;
  std::string resume;
  std::string log;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<int> batch_size;
  std::optional<std::string> fusion;
  std::optional<std::string> masking_strategy;
  std::optional<int> frames;
  std::int64_t steps = 0;
  std::int64_t checkpoint_every = 0;
  int log_every = 10;
  int workers = 1;
};

int run_train(const TrainArgs& a) {
  Checkpoint resume_state;
  ModelConfig cfg;
  const bool resuming = !a.resume.empty();
  if (resuming) {
    resume_state = load_checkpoint(a.resume);
    cfg = resume_state.config;
  } else {
    cfg = config_with_overrides(a.config, a.settings);
    cfg.seed = resolve_seed(a.seed, cfg.seed);
    if (a.epochs) cfg.optimizer.epochs = *a.epochs;
    if (a.learning_rate) cfg.optimizer.learning_rate = *a.learning_rate;
    if (a.batch_size) cfg.optimizer.batch_size = *a.batch_size;
    if (a.fusion) cfg.fusion = parse_fusion(*a.fusion);
    if (a.masking_strategy) cfg.masking_strategy = parse_masking_strategy(*a.masking_strategy);
    if (a.frames) {
      cfg.layout.frames = *a.frames;
      cfg.layout.context_frames = *a.frames - cfg.layout.future_frames;
    }
  }
  require_valid(cfg);
  const fs::path data(a.data);
  const fs::path manifest = a.manifest.empty() ? data / "train.txt" : fs::path(a.manifest);
  const auto clips = load_clips(data, manifest, cfg);
  if (clips.empty()) throw UsageError("training manifest " + manifest.string() + " lists no sequences");

  const fs::path out(a.out);
  const fs::path log_path = a.log.empty() ? fs::path(out.string() + ".loss.csv") : fs::path(a.log);
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, resuming ? std::ios::app : std::ios::trunc);
  if (!log) throw UsageError("cannot write loss log " + log_path.string());
  if (!resuming) {
    log << "step,epoch,lr,total";
    for (const auto& m : cfg.modalities) log << ',' << m.name;
    log << '\n';
  }

  TrainOptions options;
  options.total_steps = a.steps;
  options.checkpoint_every = a.checkpoint_every;
  options.on_step = [&](const StepLog& s) {
    log << s.step << ',' << s.epoch << ',' << s.learning_rate << ',' << s.loss.total;
    for (const double l : s.loss.loss) log << ',' << l;
    log << '\n';
    if (a.log_every > 0 && s.step % a.log_every == 0) {
      std::cout << "step " << s.step << " lr " << s.learning_rate << " loss " << s.loss.total << std::endl;
    }
  };
  options.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(c, out); };

  const Checkpoint result = train(cfg, clips, options, resuming ? &resume_state : nullptr);
  save_checkpoint(result, out);
  std::cout << "checkpoint at step " << result.step << " written to " << out.string() << '\n';
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string data;
  std::string manifest;
  std::string horizon = "short";
  std::string baseline;
  std::string report;
  std::string dump_frames;
  std::string method;
};

Predictor model_predictor(const Model<float>& model, const fs::path& dump) {
  return [&model, dump](const SequenceRecord& context, int steps) {
    auto preds = rollout(context, steps, model);
    if (!dump.empty()) {
      for (const auto& step : preds) {
        for (const auto& m : step.modalities) {
          write_colorized(dump / (context.sequence_id + "_" + std::to_string(m.frame_indices.front()) + "_" +
                                  m.modality.name + ".png"),
                          m);
        }
      }
    }
    return preds;
  };
}

int run_eval(const EvalArgs& a) {
  Horizon horizon;
  try {
    horizon = parse_horizon(a.horizon);
  } catch (const std::exception&) {
    throw UsageError("--horizon must be short or mid");
  }
  if (!a.baseline.empty() && a.baseline != "copy-last") throw UsageError("unknown baseline " + a.baseline);
  if (a.checkpoint.empty() && a.baseline.empty()) throw UsageError("eval needs --checkpoint and/or --baseline");

  std::optional<Checkpoint> ckpt;
  if (!a.checkpoint.empty()) ckpt = load_checkpoint(a.checkpoint);
  ModelConfig cfg = ckpt ? ckpt->config : (a.config.empty() ? desk_config() : load_config(a.config));
  require_valid(cfg);

  const fs::path data(a.data);
  const fs::path manifest_path = a.manifest.empty() ? data / "val.txt" : fs::path(a.manifest);
  const auto manifest = read_manifest(manifest_path);
  if (manifest.empty()) throw UsageError("manifest " + manifest_path.string() + " is empty");
  for (const auto& e : manifest) {
    const auto ctx = context_frame_indices(e.target_frame, horizon, cfg.layout.context_frames, cfg.subsample);
    if (ctx.front() < 0) {
      throw UsageError("target frame " + std::to_string(e.target_frame) + " of " + e.sequence_id +
                       " leaves no room for a " + to_string(horizon) + "-horizon context of " +
                       std::to_string(cfg.layout.context_frames) + " frames");
    }
  }

  EvalSettings settings{cfg.layout, cfg.modalities, cfg.subsample, cfg.absrel_denominator};
  MetricReport report;
  if (ckpt) {
    const fs::path dump(a.dump_frames);
    if (!dump.empty()) ensure_writable_dir(dump);
    evaluate(model_predictor(ckpt->model, dump), a.method.empty() ? "model" : a.method, data, manifest, horizon,
             settings, report);
  }
  if (a.baseline == "copy-last") evaluate(copy_last_baseline, "copy-last", data, manifest, horizon, settings, report);

  const std::string text = report.to_text();
  std::cout << text;
  if (!a.report.empty()) {
    fs::path csv(a.report);
    write_text(csv, report.to_csv());
    fs::path txt = csv;
    txt.replace_extension(".txt");
    if (txt != csv) write_text(txt, text);
  }
  return report.incomplete() ? kRuntime : 0;
}

// ---- rollout ----

struct RolloutArgs {
  std::string checkpoint;
  std::string data;
  std::string sequence;
  std::string city;
  std::string emit;
  int steps = 1;
  int from = -1;
};

std::string find_city(const fs::path& data, const std::string& sequence) {
  std::error_code ec;
  for (const auto& dir : fs::directory_iterator(data, ec)) {
    if (!dir.is_directory()) continue;
    const std::string city = dir.path().filename().string();
    const std::string prefix = city + "_" + sequence + "_";
    for (const auto& f : fs::directory_iterator(dir.path())) {
      if (f.path().filename().string().rfind(prefix, 0) == 0) return city;
    }
  }
  return {};
}

int run_rollout(const RolloutArgs& a) {
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ModelConfig& cfg = ckpt.config;
  const fs::path data(a.data);
  const std::string city = a.city.empty() ? find_city(data, a.sequence) : a.city;
  if (city.empty()) throw UsageError("unknown sequence id " + a.sequence + " under " + data.string());
  const int last = a.from >= 0 ? a.from : cfg.subsample * (cfg.layout.context_frames - 1);
  std::vector<int> frames;
  for (int i = 0; i < cfg.layout.context_frames; ++i) {
    frames.push_back(last - cfg.subsample * (cfg.layout.context_frames - 1 - i));
  }
  if (frames.front() < 0) throw UsageError("--from leaves no room for the context window");
  SequenceRecord context;
  try {
    context = load_frames(data, city, a.sequence, frames, cfg.modalities, cfg.layout, cfg.subsample);
  } catch (const LoadError& e) {
    throw UsageError(std::string("unknown sequence or missing frames: ") + e.what());
  }
  const auto preds = rollout(context, a.steps, ckpt.model);
  const fs::path emit(a.emit);
  ensure_writable_dir(emit);
  fs::create_directories(emit / "raw");
  for (int s = 0; s < a.steps; ++s) {
    const std::string offset = "t+" + std::to_string((s + 1) * cfg.subsample);
    for (const auto& m : preds[s].modalities) {
      const std::string name = a.sequence + "_" + offset + "_" + m.modality.name + ".png";
      write_colorized(emit / name, m);
      write_label_png(emit / "raw" / name, m);
    }
  }
  std::cout << "wrote " << a.steps << " step(s) for " << cfg.modalities.size() << " modalities to " << emit.string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked multimodal future prediction: data, training, evaluation, rollout"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render synthetic moving-shape sequences");
  gen_cmd->add_option("--spec", gen.spec, "Scene distribution file (key = value)");
  gen_cmd->add_option("--out", gen.out, "Output root")->required();
  gen_cmd->add_option("--num-sequences", gen.num_sequences, "Number of sequences");
  gen_cmd->add_option("--frames", gen.frames, "Frames per sequence");
  gen_cmd->add_option("--target", gen.target, "Manifest target frame");
  gen_cmd->add_option("--seed", gen.seed, "Seed (falls back to FUTURIST_SEED)");
  gen_cmd->add_option("--split", gen.split, "Split name; the manifest is written to <out>/<split>.txt");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "Config file (defaults to the desk config)");
  train_cmd->add_option("--data", tr.data, "Data root")->required();
  train_cmd->add_option("--manifest", tr.manifest, "Training manifest (default <data>/train.txt)");
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--resume", tr.resume, "Continue from this checkpoint");
  train_cmd->add_option("--log", tr.log, "Loss CSV (default <out>.loss.csv)");
  train_cmd->add_option("--set", tr.settings, "Config override key=value (repeatable)");
  train_cmd->add_option("--seed", tr.seed, "Seed (falls back to FUTURIST_SEED, then the config)");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--learning-rate", tr.learning_rate);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--fusion", tr.fusion);
  train_cmd->add_option("--masking-strategy", tr.masking_strategy);
  train_cmd->add_option("--frames", tr.frames, "Sequence length N (one future frame)");
  train_cmd->add_option("--steps", tr.steps, "Total optimizer steps (overrides epochs)");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every);
  train_cmd->add_option("--log-every", tr.log_every);
  train_cmd->add_option("--workers", tr.workers, "Data-loader concurrency cap");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint and/or the Copy-Last baseline");
  eval_cmd->add_option("--checkpoint", ev.checkpoint);
  eval_cmd->add_option("--config", ev.config, "Layout/modalities when no checkpoint is given");
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--manifest", ev.manifest, "Split manifest (default <data>/val.txt)");
  eval_cmd->add_option("--horizon", ev.horizon, "short or mid");
  eval_cmd->add_option("--baseline", ev.baseline, "copy-last");
  eval_cmd->add_option("--report", ev.report, "CSV path; a .txt table is written beside it");
  eval_cmd->add_option("--dump-frames", ev.dump_frames, "Directory for colorized predictions");
  eval_cmd->add_option("--method", ev.method, "Row label for the checkpoint");

  RolloutArgs ro;
  auto* rollout_cmd = app.add_subcommand("rollout", "Autoregressive rollout with colorized frame dumps");
  rollout_cmd->add_option("--checkpoint", ro.checkpoint)->required();
  rollout_cmd->add_option("--data", ro.data)->required();
  rollout_cmd->add_option("--sequence", ro.sequence)->required();
  rollout_cmd->add_option("--city", ro.city);
  rollout_cmd->add_option("--steps", ro.steps);
  rollout_cmd->add_option("--from", ro.from, "Frame index of the last context frame");
  rollout_cmd->add_option("--emit-frames", ro.emit)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*rollout_cmd) return run_rollout(ro);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
