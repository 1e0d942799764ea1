#include "pccd/metrics.hpp"
#include "pccd/format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pccd {
namespace {

std::size_t idx(Closeness c) { return static_cast<std::size_t>(c); }

void check_lengths(std::size_t a, std::size_t b) {
  if (a == 0) throw std::invalid_argument("metrics need at least one triplet");
  if (a != b) throw std::invalid_argument("prediction and truth lengths differ");
}

}  // namespace

ClassificationMetrics classification_metrics(std::span<const Closeness> predicted,
                                             std::span<const Closeness> truth) {
  check_lengths(predicted.size(), truth.size());
  ClassificationMetrics m;
  for (std::size_t n = 0; n < truth.size(); ++n) ++m.confusion[idx(truth[n])][idx(predicted[n])];

  const auto total = static_cast<double>(truth.size());
  double correct = 0.0;
  double sum_pt = 0.0;
  double sum_pp = 0.0;
  double sum_tt = 0.0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    double t = 0.0;
    double p = 0.0;
    for (std::size_t o = 0; o < 3; ++o) {
      t += static_cast<double>(m.confusion[c][o]);
      p += static_cast<double>(m.confusion[o][c]);
    }
    const auto tp = static_cast<double>(m.confusion[c][c]);
    correct += tp;
    sum_pt += p * t;
    sum_pp += p * p;
    sum_tt += t * t;
    if (t + p > 0.0) f1_sum += 2.0 * tp / (t + p);
  }
  m.accuracy = correct / total;
  m.f1_macro = f1_sum / 3.0;
  const double denom = std::sqrt(total * total - sum_pp) * std::sqrt(total * total - sum_tt);
  // Clamped: rounding can push a perfect score a hair past 1.
  m.mcc = denom > 0.0 ? std::clamp((correct * total - sum_pt) / denom, -1.0, 1.0) : 0.0;
  return m;
}

RetrievalMetrics retrieval_metrics(std::span<const double> predictions,
                                   std::span<const Closeness> truth) {
  check_lengths(predictions.size(), truth.size());
  RetrievalMetrics r;
  const double discount2 = 1.0 / std::log2(3.0);
  for (std::size_t n = 0; n < truth.size(); ++n) {
    const double rel_j = truth[n] == Closeness::kFarther ? 0.0 : 1.0;
    const double rel_k = truth[n] == Closeness::kCloser ? 0.0 : 1.0;
    const bool j_first = predictions[n] >= 0.5;
    const double first = j_first ? rel_j : rel_k;
    const double second = j_first ? rel_k : rel_j;
    const double relevant = first + second;

    r.mrr += first > 0.0 ? 1.0 : 0.5;
    const double ideal = 1.0 + (relevant > 1.0 ? discount2 : 0.0);
    r.ndcg += (first + second * discount2) / ideal;
    const double precision_sum = first + (second > 0.0 ? (first + second) / 2.0 : 0.0);
    r.map += precision_sum / relevant;
  }
  const auto total = static_cast<double>(truth.size());
  r.mrr /= total;
  r.ndcg /= total;
  r.map /= total;
  return r;
}

MetricsReport evaluate_predictions(std::span<const double> predictions,
                                   std::span<const Closeness> truth) {
  check_lengths(predictions.size(), truth.size());
  std::vector<Closeness> predicted;
  predicted.reserve(predictions.size());
  for (double p : predictions) predicted.push_back(classify_score(p));
  const ClassificationMetrics c = classification_metrics(predicted, truth);
  const RetrievalMetrics r = retrieval_metrics(predictions, truth);
  return {c.accuracy, c.f1_macro, c.mcc, r.mrr, r.ndcg, r.map, truth.size(), c.confusion};
}

MetricsReport average_reports(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw std::invalid_argument("nothing to average");
  MetricsReport mean;
  for (const auto& r : reports) {
    mean.acc += r.acc;
    mean.f1_macro += r.f1_macro;
    mean.mcc += r.mcc;
    mean.mrr += r.mrr;
    mean.ndcg += r.ndcg;
    mean.map += r.map;
    mean.n_triplets += r.n_triplets;
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t p = 0; p < 3; ++p) mean.confusion[t][p] += r.confusion[t][p];
    }
  }
  const auto n = static_cast<double>(reports.size());
  mean.acc /= n;
  mean.f1_macro /= n;
  mean.mcc /= n;
  mean.mrr /= n;
  mean.ndcg /= n;
  mean.map /= n;
  return mean;
}

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "metric,value\n"
      << "acc," << format_double(report.acc) << '\n'
      << "f1," << format_double(report.f1_macro) << '\n'
      << "mcc," << format_double(report.mcc) << '\n'
      << "mrr," << format_double(report.mrr) << '\n'
      << "ndcg," << format_double(report.ndcg) << '\n'
      << "map," << format_double(report.map) << '\n'
      << "n_triplets," << report.n_triplets << '\n';
  return out.str();
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::json doc;
  doc["acc"] = report.acc;
  doc["f1"] = report.f1_macro;
  doc["mcc"] = report.mcc;
  doc["mrr"] = report.mrr;
  doc["ndcg"] = report.ndcg;
  doc["map"] = report.map;
  doc["n_triplets"] = report.n_triplets;
  doc["confusion"] = report.confusion;
  return doc.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    MetricsReport r;
    r.acc = doc.at("acc").get<double>();
    r.f1_macro = doc.at("f1").get<double>();
    r.mcc = doc.at("mcc").get<double>();
    r.mrr = doc.at("mrr").get<double>();
    r.ndcg = doc.at("ndcg").get<double>();
    r.map = doc.at("map").get<double>();
    r.n_triplets = doc.at("n_triplets").get<std::size_t>();
    r.confusion = doc.at("confusion").get<ConfusionMatrix>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed metrics report: ") + e.what());
  }
}

void write_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
  std::ofstream csv(csv_path);
  std::ofstream json(json_path);
  if (!csv || !json) throw std::runtime_error("cannot write metrics report");
  csv << report_to_csv(report);
  json << report_to_json(report) << '\n';
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("t-test samples differ in length");
  if (a.size() < 2) throw std::invalid_argument("t-test needs at least two pairs");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double var = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) var += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  var /= n - 1.0;
  TTestResult r;
  r.n = a.size();
  if (var == 0.0) {
    r.t = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    r.p_value = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / std::sqrt(var / n);
  r.p_value = std::erfc(std::abs(r.t) / std::sqrt(2.0));
  return r;
}

}  // namespace pccd
