#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfas/label.hpp"

namespace specfas {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Attack (Fake) is the positive class:
///   tp = fake predicted fake, fn = fake predicted real,
///   tn = real predicted real, fp = real predicted fake.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;

  std::size_t fakes() const { return tp + fn; }
  std::size_t reals() const { return fp + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// All rates in percent.
struct MetricsReport {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  std::optional<double> threshold;
  ConfusionCounts counts;
};

using ScoreMap = std::map<std::string, double>;
using LabelMap = std::map<std::string, Label>;

// A sample is predicted Fake when score >= threshold.
ConfusionCounts confusion(const ScoreMap& scores, const LabelMap& labels, double threshold);

// APCER = FN / (TP + FN), BPCER = FP / (FP + TN), ACER = mean of the two.
MetricsReport acer_report(const ConfusionCounts& counts, std::optional<double> threshold = std::nullopt);

// One report per threshold of an ascending, non-empty grid.
std::vector<MetricsReport> threshold_sweep(const ScoreMap& scores, const LabelMap& labels,
                                           const std::vector<double>& grid);

// Aligned text table with rates to four decimals.
std::string format_table(const std::vector<MetricsReport>& reports);
// threshold,tp,fn,fp,tn,apcer,bpcer,acer at full precision.
std::string format_csv(const std::vector<MetricsReport>& reports);

// `id,score` per line; an optional `id,score` header line is skipped.
ScoreMap read_scores_csv(const std::filesystem::path& path);
void write_scores_csv(const std::filesystem::path& path, const ScoreMap& scores);
// Either a dataset manifest (tab-separated, label in the third column) or a
// CSV of `id,label`.
LabelMap read_labels(const std::filesystem::path& path);

}  // namespace specfas
