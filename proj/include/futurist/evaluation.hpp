#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "futurist/core_types.hpp"
#include "futurist/datasets.hpp"

namespace futurist {

// Rows = ground truth, columns = prediction. Ignore-id ground truth pixels are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_labels = 0);

  // Throws ShapeError on size mismatch, RangeError for predictions >= num_labels.
  void add(const LabelArray& pred, const LabelArray& gt);
  void merge(const ConfusionMatrix& other);

  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * n_ + pred]; }
  int num_labels() const { return n_; }

  // Mean IoU ×100 over classes present in the ground truth (restricted to `subset` when
  // given). nullopt when no class qualifies.
  std::optional<double> miou(const std::vector<int>* subset = nullptr) const;

 private:
  int n_ = 0;
  std::vector<std::uint64_t> counts_;
};

std::optional<double> miou(const LabelArray& pred, const LabelArray& gt, int num_labels,
                           const std::vector<int>* subset = nullptr);

// Disparities below this are clamped before any ratio is formed.
inline constexpr double kDisparityFloor = 1.0 / 512.0;

struct DepthScores {
  double absrel = 0.0;  // ×100
  double delta1 = 0.0;  // percent
};

class DepthAccumulator {
 public:
  explicit DepthAccumulator(int num_bins = 256, AbsRelDenominator denominator = AbsRelDenominator::kPredicted)
      : bins_(num_bins), denominator_(denominator) {}

  void add(const LabelArray& pred_bins, const LabelArray& gt_bins);
  // One pixel given as disparities (clamped to kDisparityFloor).
  void add_disparity(double pred, double gt);
  void merge(const DepthAccumulator& other);
  std::uint64_t pixels() const { return pixels_; }
  // nullopt when no pixel has been added.
  std::optional<DepthScores> scores() const;

 private:
  int bins_;
  AbsRelDenominator denominator_;
  double relative_error_sum_ = 0.0;
  std::uint64_t within_ = 0;
  std::uint64_t pixels_ = 0;
};

DepthScores depth_metrics(const LabelArray& pred_bins, const LabelArray& gt_bins, int num_bins,
                          AbsRelDenominator denominator = AbsRelDenominator::kPredicted);

// The last context frame of every modality, repeated `steps` times.
std::vector<SequenceRecord> copy_last_baseline(const SequenceRecord& context, int steps);

// Produces `steps` predictions from a context window.
using Predictor = std::function<std::vector<SequenceRecord>(const SequenceRecord& context, int steps)>;

struct MetricRow {
  std::string method;
  std::string horizon;
  std::optional<double> miou_all;
  std::optional<double> miou_mo;
  std::optional<double> delta1;
  std::optional<double> absrel;
  int evaluated = 0;
  int failed = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<std::string> failures;  // "city seq: reason"

  bool incomplete() const { return !failures.empty(); }
  std::string to_csv() const;
  std::string to_text() const;
};

struct EvalSettings {
  TokenLayout layout;
  std::vector<ModalitySpec> modalities;
  int subsample = 3;
  AbsRelDenominator absrel_denominator = AbsRelDenominator::kPredicted;
};

// Rolls every manifest entry forward to its target frame, upsamples predictions to the ground
// truth resolution and accumulates split-level metrics. Items with missing files are
// recorded in `report.failures` and skipped. Throws ContractError on an empty manifest.
MetricRow evaluate(const Predictor& predictor, const std::string& method, const std::filesystem::path& root,
                   const std::vector<ManifestEntry>& manifest, Horizon horizon, const EvalSettings& settings,
                   MetricReport& report);

}  // namespace futurist
