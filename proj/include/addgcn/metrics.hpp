#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Multi-label evaluation: mAP and the per-class / overall precision, recall
// and F1 suite, for thresholded ("All") and top-3 predictions.

namespace addgcn {

/// N x C logits (row-major) with binary labels.
struct EvalBatch {
  std::size_t samples = 0;
  std::size_t classes = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> ids;  // optional, one per sample

  double score(std::size_t n, std::size_t c) const { return scores[n * classes + c]; }
  bool label(std::size_t n, std::size_t c) const { return labels[n * classes + c] != 0; }
  void validate() const;
};

struct PrfSuite {
  double cp = 0, cr = 0, cf1 = 0;
  double op = 0, orr = 0, of1 = 0;
};

struct MetricsReport {
  double map = 0;
  PrfSuite all;
  PrfSuite top3;
  /// AP per class; empty for classes without positives.
  std::vector<std::optional<double>> class_ap;
};

struct MetricsOptions {
  std::size_t top_k = 3;
  /// Also require logit > 0 inside the top-k set.
  bool top_k_threshold = false;
};

/// Sum of precision@k at each positive rank over the number of positives,
/// ranking by descending score with ties broken by ascending index.
/// Returns nullopt when there are no positives.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

/// 2PR/(P+R), or 0 when P+R = 0.
double f1(double precision, double recall);

/// "All" suite: a label is predicted when its logit is > 0 (probability > 0.5).
/// Top-k suite: the k highest-scoring classes of each sample.
PrfSuite prf_suite(const EvalBatch& batch, bool top_k, const MetricsOptions& opts = {});

MetricsReport evaluate(const EvalBatch& batch, const MetricsOptions& opts = {});

nlohmann::json to_json(const MetricsReport& report);
std::string csv_header();
std::string csv_row(const MetricsReport& report);

/// JSONL with one {"sample_id", "scores", "labels"} object per line.
void write_scores_jsonl(const std::filesystem::path& path, const EvalBatch& batch);
EvalBatch read_scores_jsonl(const std::filesystem::path& path);

}  // namespace addgcn
