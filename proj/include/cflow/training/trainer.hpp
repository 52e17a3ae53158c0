#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cflow/errors.hpp"
#include "cflow/training/checkpoint.hpp"
#include "cflow/training/objectives.hpp"

namespace cflow {

enum class Objective { kMle, kContrastive };
std::string_view objective_name(Objective o);
Objective parse_objective(std::string_view name);

struct TrainConfig {
  Objective objective = Objective::kMle;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0 = run every epoch in full
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  /// Contrastive floor. Unset means: initial in-distribution mean log p
  /// minus `contrastive_margin`.
  std::optional<double> contrastive_c;
  double contrastive_margin = 50.0;
  double alpha = kDefaultLogitAlpha;
  std::size_t eval_examples = 512;  // examples used for the per-epoch metrics
};

/// `train.*` keys.
TrainConfig read_train_config(ConfigReader& reader);
void write_train_config(const TrainConfig& config, ConfigMap& out);

/// Training data: 8-bit pixel values dequantized on every draw, or real
/// vectors used as they are (offset 0).
struct TrainingSet {
  Tensor data;  // N x D
  bool quantized = true;
};

/// Rows `indices` of `set`, dequantized with fresh noise from `rng` when the
/// set is quantized.
Dequantized prepare_batch(const TrainingSet& set, std::span<const std::size_t> indices, Pcg32& rng, double alpha);
Dequantized prepare_all(const TrainingSet& set, Pcg32& rng, double alpha);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double objective = 0.0;  // training objective (to maximize) on the metric subset
  double mean_nll = 0.0;   // nats per example, in-distribution metric subset
  double bits_per_dim = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> log;  // row 0 is the untrained model
  TrainingState state;
  std::optional<double> contrastive_c;  // the floor actually used
};

/// Thrown when a step produces a non-finite value. Failed steps never modify
/// the model, so the model passed to train() still holds the last good state
/// and `state` completes it into a checkpoint.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& detail, TrainingState state) : NumericError(detail), state_(std::move(state)) {}
  const TrainingState& state() const { return state_; }

 private:
  TrainingState state_;
};

/// Trains `model` in place. Batch norm runs in train mode on in-distribution
/// batches and in eval mode everywhere else. Deterministic given the config.
TrainResult train(FlowModel& model, const TrainConfig& config, const TrainingSet& data,
                  const TrainingSet* ood = nullptr,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace cflow
