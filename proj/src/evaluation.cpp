#include "futurist/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "futurist/errors.hpp"

namespace futurist {

ConfusionMatrix::ConfusionMatrix(int num_labels)
    : n_(num_labels), counts_(static_cast<std::size_t>(num_labels) * num_labels, 0) {}

void ConfusionMatrix::add(const LabelArray& pred, const LabelArray& gt) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth differ in size");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt[i];
    if (g == kIgnoreLabel || g >= n_) continue;
    const int p = pred[i];
    if (p >= n_) throw RangeError("predicted label " + std::to_string(p) + " outside the label set");
    ++counts_[static_cast<std::size_t>(g) * n_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::optional<double> ConfusionMatrix::miou(const std::vector<int>* subset) const {
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < n_; ++c) {
    if (subset && std::find(subset->begin(), subset->end(), c) == subset->end()) continue;
    std::uint64_t gt_total = 0;
    std::uint64_t pred_total = 0;
    for (int j = 0; j < n_; ++j) {
      gt_total += at(c, j);
      pred_total += at(j, c);
    }
    if (gt_total == 0) continue;
    const std::uint64_t inter = at(c, c);
    const std::uint64_t uni = gt_total + pred_total - inter;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++classes;
  }
  if (classes == 0) return std::nullopt;
  return 100.0 * sum / classes;
}

std::optional<double> miou(const LabelArray& pred, const LabelArray& gt, int num_labels,
                           const std::vector<int>* subset) {
  ConfusionMatrix cm(num_labels);
  cm.add(pred, gt);
  return cm.miou(subset);
}

void DepthAccumulator::add_disparity(double pred, double gt) {
  const double b = std::max(pred, kDisparityFloor);
  const double a = std::max(gt, kDisparityFloor);
  const double denom = denominator_ == AbsRelDenominator::kPredicted ? b : a;
  relative_error_sum_ += std::abs(a - b) / denom;
  // max(a/b, b/a) < 1.25 without forming the quotients, so decimal boundary cases stay exact
  if (a < 1.25 * b && b < 1.25 * a) ++within_;
  ++pixels_;
}

void DepthAccumulator::add(const LabelArray& pred_bins, const LabelArray& gt_bins) {
  if (pred_bins.size() != gt_bins.size()) throw ShapeError("prediction and ground truth differ in size");
  for (std::size_t i = 0; i < gt_bins.size(); ++i) {
    if (pred_bins[i] >= bins_ || gt_bins[i] >= bins_) throw RangeError("depth bin outside [0, num_bins)");
    add_disparity(dequantize_depth(pred_bins[i], bins_), dequantize_depth(gt_bins[i], bins_));
  }
}

void DepthAccumulator::merge(const DepthAccumulator& other) {
  relative_error_sum_ += other.relative_error_sum_;
  within_ += other.within_;
  pixels_ += other.pixels_;
}

std::optional<DepthScores> DepthAccumulator::scores() const {
  if (pixels_ == 0) return std::nullopt;
  const double n = static_cast<double>(pixels_);
  return DepthScores{100.0 * relative_error_sum_ / n, 100.0 * static_cast<double>(within_) / n};
}

DepthScores depth_metrics(const LabelArray& pred_bins, const LabelArray& gt_bins, int num_bins,
                          AbsRelDenominator denominator) {
  DepthAccumulator acc(num_bins, denominator);
  acc.add(pred_bins, gt_bins);
  return acc.scores().value_or(DepthScores{});
}

std::vector<SequenceRecord> copy_last_baseline(const SequenceRecord& context, int steps) {
  if (steps < 1) throw ContractError("baseline needs at least one step");
  if (context.num_frames() < 1) throw ContractError("empty context");
  SequenceRecord last = context.frames(context.num_frames() - 1, 1);
  std::vector<SequenceRecord> out;
  const int stride = std::max(1, context.subsample);
  for (int s = 1; s <= steps; ++s) {
    SequenceRecord step = last;
    for (auto& m : step.modalities) m.frame_indices = {m.frame_indices.front() + s * stride};
    out.push_back(std::move(step));
  }
  return out;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

std::string csv_cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

bool is_depth(const ModalitySpec& m) { return m.name == kDepth; }

}  // namespace

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "method,horizon,miou_all,miou_mo,delta1,absrel,evaluated,failed\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.horizon << ',' << csv_cell(r.miou_all) << ',' << csv_cell(r.miou_mo) << ','
       << csv_cell(r.delta1) << ',' << csv_cell(r.absrel) << ',' << r.evaluated << ',' << r.failed << '\n';
  }
  return os.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %-7s %8s %8s %8s %8s\n", "method", "horizon", "ALL", "MO", "d1",
                "AbsRel");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-24s %-7s %8s %8s %8s %8s\n", r.method.c_str(), r.horizon.c_str(),
                  cell(r.miou_all).c_str(), cell(r.miou_mo).c_str(), cell(r.delta1).c_str(),
                  cell(r.absrel).c_str());
    os << line;
  }
  if (incomplete()) {
    os << "INCOMPLETE: " << failures.size() << " item(s) could not be evaluated\n";
    for (const auto& f : failures) os << "  " << f << '\n';
  }
  return os.str();
}

MetricRow evaluate(const Predictor& predictor, const std::string& method, const std::filesystem::path& root,
                   const std::vector<ManifestEntry>& manifest, Horizon horizon, const EvalSettings& settings,
                   MetricReport& report) {
  if (manifest.empty()) throw ContractError("evaluation manifest is empty");
  const int steps = rollout_steps(horizon);
  const ModalitySpec* semantic = nullptr;
  const ModalitySpec* depth = nullptr;
  for (const auto& m : settings.modalities) {
    if (is_depth(m)) {
      if (!depth) depth = &m;
    } else if (!semantic) {
      semantic = &m;
    }
  }
  ConfusionMatrix confusion(semantic ? semantic->num_labels : 0);
  DepthAccumulator pool(depth ? depth->num_labels : 256, settings.absrel_denominator);
  bool semantic_seen = false;

  MetricRow row;
  row.method = method;
  row.horizon = to_string(horizon);
  for (const auto& entry : manifest) {
    const std::string item = entry.city + " " + entry.sequence_id + " " + std::to_string(entry.target_frame);
    try {
      const SequenceRecord context = load_sequence(root, entry.city, entry.sequence_id, entry.target_frame, horizon,
                                                   settings.layout, settings.modalities, settings.subsample);
      const auto predictions = predictor(context, steps);
      if (predictions.size() != static_cast<std::size_t>(steps)) {
        throw ContractError("predictor returned " + std::to_string(predictions.size()) + " steps, expected " +
                            std::to_string(steps));
      }
      const SequenceRecord& final_step = predictions.back();
      ConfusionMatrix item_confusion(confusion.num_labels());
      DepthAccumulator item_pool(depth ? depth->num_labels : 256, settings.absrel_denominator);
      bool item_semantic = false;
      for (const auto& pred : final_step.modalities) {
        const ModalitySpec* spec = pred.modality.name == (semantic ? semantic->name : "") ? semantic
                                   : pred.modality.name == (depth ? depth->name : "") ? depth
                                                                                       : nullptr;
        if (!spec) continue;
        if (pred.frame_indices.front() != entry.target_frame) {
          throw ContractError("prediction lands on frame " + std::to_string(pred.frame_indices.front()) +
                              ", target is " + std::to_string(entry.target_frame));
        }
        const FrameSequence gt =
            load_frame(root, entry.city, entry.sequence_id, entry.target_frame, *spec, spec == semantic);
        const LabelArray up =
            resize_nearest(pred.labels, pred.height, pred.width, gt.height, gt.width, spec->num_labels);
        if (spec == semantic) {
          item_confusion.add(up, gt.labels);
          item_semantic = true;
        } else {
          item_pool.add(up, gt.labels);
        }
      }
      confusion.merge(item_confusion);
      pool.merge(item_pool);
      semantic_seen = semantic_seen || item_semantic;
      ++row.evaluated;
    } catch (const LoadError& e) {
      ++row.failed;
      report.failures.push_back(method + " " + item + ": " + e.what());
    }
  }
  if (semantic_seen) {
    row.miou_all = confusion.miou();
    row.miou_mo = confusion.miou(&semantic->movable_label_ids);
  }
  if (const auto d = pool.scores()) {
    row.delta1 = d->delta1;
    row.absrel = d->absrel;
  }
  report.rows.push_back(row);
  return row;
}

}  // namespace futurist
