#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cflow/training/trainer.hpp"

namespace cflow {

/// How scores were produced; recorded with every ScoreSet.
struct ScoringPolicy {
  BnMode bn_mode = BnMode::kEval;
  std::uint64_t seed = 0;           // dequantization noise; example i uses stream i
  std::size_t noise_samples = 1;    // k draws averaged per example
  std::size_t batch_size = 256;     // in train mode this is the statistics batch
  std::size_t workers = 1;          // eval-mode parallelism; output order is fixed
  double alpha = kDefaultLogitAlpha;

  bool operator==(const ScoringPolicy&) const = default;
};

struct ScoreSet {
  std::string dataset;
  std::vector<double> logp;  // nats, one per example
  ScoringPolicy policy;
};

/// Mean over k dequantization draws of log p (offsets included). Batches are
/// contiguous and as equal in size as possible, so train-mode scoring never
/// sees a batch of one unless the dataset has a single example.
ScoreSet score_dataset(const FlowModel& model, const TrainingSet& data, const std::string& dataset,
                       const ScoringPolicy& policy = {});

/// P(in > ood) + P(in = ood) / 2 over all pairs, from average ranks.
double auroc(std::span<const double> in_scores, std::span<const double> ood_scores);

/// In-distribution is the positive class; score >= tau predicts positive.
struct ThresholdMetrics {
  double tpr = 0.0;
  double fpr = 0.0;
  double accuracy = 0.0;
};
ThresholdMetrics threshold_metrics(std::span<const double> in_scores, std::span<const double> ood_scores, double tau);

/// (FPR, TPR) points from tau = +inf down through every distinct score.
std::vector<std::pair<double, double>> roc_curve(std::span<const double> in_scores, std::span<const double> ood_scores);
/// Trapezoid area under roc_curve().
double roc_area(const std::vector<std::pair<double, double>>& curve);

/// Left-closed, right-open bins over [lo, hi).
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;  // score < lo
  std::size_t overflow = 0;   // score >= hi
};
Histogram histogram(std::span<const double> scores, std::size_t bins, double lo, double hi);

// CSV files: scores `dataset,index,logp_nats`; histograms
// `bin_left,bin_right,count` with underflow/overflow rows at -inf/inf.
void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores);
/// Reads every row; all rows must name the same dataset.
ScoreSet read_scores_csv(const std::filesystem::path& path);
void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);
/// The policy sidecar written next to a scores file.
std::filesystem::path policy_sidecar_path(const std::filesystem::path& scores_path);

}  // namespace cflow
