#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "cflow/ood/ood.hpp"
#include "cflow/training/trainer.hpp"

namespace cflow {

/// A loaded dataset ready for the flow.
struct NamedSet {
  std::string name;
  TrainingSet set;
  ImageShape shape;
};

/// Image sources, as written in `data.*` values:
///   synthetic:<blobs|stripes|patches>:<n>:<resolution>:<seed>
///   idx:<path to an IDX image file>
/// Vector sources (need `data.class`, which splits them per class):
///   csv:<path>            header row, integer `label` column
///   gmm:<n per class>:<dims>:<seed>
/// Unlabeled vector source:
///   moons:<n>:<noise>:<seed>
struct SourceSpec {
  std::string kind;
  std::vector<std::string> args;
};
SourceSpec parse_source_spec(const std::string& text);

/// Loads an image or unlabeled source. Labeled vector sources go through
/// resolve_run_config, which splits them by class.
NamedSet load_image_source(const std::string& spec, const std::string& name);

struct RunData {
  NamedSet train;
  std::optional<NamedSet> test;       // in-distribution held-out set
  std::optional<NamedSet> ood;        // OOD evaluation set
  std::optional<NamedSet> ood_train;  // OOD set the contrastive objective sees
};

/// Everything an experiment run needs, read from a flat config.
///
/// Keys: `model.*`, `train.*`, `score.*` (bn_mode, seed, noise_samples,
/// batch_size, workers), `data.*` (train, test, ood, ood_train, class,
/// test_fraction, split_seed, filter_threshold), `output.dir` and `run.seed`.
/// `run.seed` is the default for every other seed key. A missing
/// `model.input` is taken from the training data.
struct RunConfig {
  FlowConfig model;
  TrainConfig train;
  ScoringPolicy score;
  RunData data;
  std::filesystem::path output_dir;
  ConfigMap resolved;  // every key with its effective value
};

ConfigMap read_config_file(const std::filesystem::path& path);
/// Rejects unknown keys before loading any data.
RunConfig resolve_run_config(const ConfigMap& raw);
ScoringPolicy read_scoring_policy(ConfigReader& reader, double alpha);
void write_scoring_policy(const ScoringPolicy& policy, ConfigMap& out);

struct TrainRun {
  std::unique_ptr<FlowModel> model;
  TrainResult result;
};
TrainRun run_training(const RunConfig& config, const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Writes `model.ckpt`, `metrics.csv`, `resolved.cfg` and `summary.cfg`.
void write_training_outputs(const std::filesystem::path& dir, const RunConfig& config, const TrainRun& run);

struct ScoreRun {
  ScoreSet in;  // test set when configured, training set otherwise
  std::optional<ScoreSet> ood;
};
ScoreRun run_scoring(const RunConfig& config, const FlowModel& model, const ScoringPolicy& policy);

}  // namespace cflow
