#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

#include "pccd/model.hpp"

namespace pccd {

// Rows: true label, columns: predicted label, both indexed by Closeness.
using ConfusionMatrix = std::array<std::array<std::size_t, 3>, 3>;

struct ClassificationMetrics {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double mcc = 0.0;
  ConfusionMatrix confusion{};
};

// Accuracy, macro F1 (undefined per-class F1 counts as 0) and the multiclass
// (Gorodkin) MCC, which is 0 when its denominator vanishes.
ClassificationMetrics classification_metrics(std::span<const Closeness> predicted,
                                             std::span<const Closeness> truth);

struct RetrievalMetrics {
  double mrr = 0.0;
  double ndcg = 0.0;
  double map = 0.0;
};

// Each triplet ranks its two candidates: j first when y_hat >= 0.5. The closer
// candidate is relevant for closer/farther labels; both are for similar.
// NDCG uses cutoff 2 and binary gains.
RetrievalMetrics retrieval_metrics(std::span<const double> predictions,
                                   std::span<const Closeness> truth);

struct MetricsReport {
  double acc = 0.0;
  double f1_macro = 0.0;
  double mcc = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
  double map = 0.0;
  std::size_t n_triplets = 0;
  ConfusionMatrix confusion{};

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Scores y_hat against the true labels; predicted labels come from classify_score.
MetricsReport evaluate_predictions(std::span<const double> predictions,
                                   std::span<const Closeness> truth);

// Mean of every metric; triplet counts and confusion entries are summed.
MetricsReport average_reports(std::span<const MetricsReport> reports);

std::string report_to_csv(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
void write_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;  // two-sided, normal approximation
  std::size_t n = 0;
};

// Paired t-test on per-run scores. Needs at least two pairs.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace pccd
