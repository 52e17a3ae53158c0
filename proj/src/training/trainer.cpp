#include "cflow/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace cflow {

namespace {

constexpr std::uint64_t kTrainStream = 0x7a1;
constexpr std::uint64_t kMetricStream = 0xe7a1;

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void shuffle(std::vector<std::size_t>& v, Pcg32& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(static_cast<std::uint32_t>(i))]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Fixed evaluation batch: the first `limit` rows with noise from a dedicated stream.
Dequantized metric_batch(const TrainingSet& set, std::size_t limit, std::uint64_t seed, std::uint64_t salt, double alpha) {
  Pcg32 rng(seed, kMetricStream + salt);
  const auto idx = iota_n(std::min(limit, set.data.rows()));
  return prepare_batch(set, idx, rng, alpha);
}

}  // namespace

std::string_view objective_name(Objective o) { return o == Objective::kMle ? "mle" : "contrastive"; }

Objective parse_objective(std::string_view name) {
  if (name == "mle") return Objective::kMle;
  if (name == "contrastive") return Objective::kContrastive;
  throw ConfigError("unknown objective '" + std::string(name) + "' (expected mle or contrastive)");
}

TrainConfig read_train_config(ConfigReader& r) {
  TrainConfig c;
  c.objective = parse_objective(r.get_string("train.objective", std::string(objective_name(c.objective))));
  c.learning_rate = r.get_double("train.learning_rate", c.learning_rate);
  c.batch_size = r.get_uint("train.batch_size", c.batch_size);
  c.epochs = r.get_uint("train.epochs", c.epochs);
  c.max_steps = r.get_uint("train.max_steps", c.max_steps);
  c.seed = r.get_uint("train.seed", c.seed);
  c.weight_decay = r.get_double("train.weight_decay", c.weight_decay);
  if (auto v = r.raw("train.contrastive_c"); v && *v != "auto") c.contrastive_c = r.get_double("train.contrastive_c", 0.0);
  c.contrastive_margin = r.get_double("train.contrastive_margin", c.contrastive_margin);
  c.alpha = r.get_double("train.alpha", c.alpha);
  c.eval_examples = r.get_uint("train.eval_examples", c.eval_examples);
  if (!(c.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (c.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (c.eval_examples < 2) throw ConfigError("train.eval_examples must be at least 2");
  if (!(c.alpha >= 0.0 && c.alpha < 0.5)) throw ConfigError("train.alpha must be in [0, 0.5)");
  return c;
}

void write_train_config(const TrainConfig& c, ConfigMap& out) {
  out["train.objective"] = std::string(objective_name(c.objective));
  out["train.learning_rate"] = format_double(c.learning_rate);
  out["train.batch_size"] = std::to_string(c.batch_size);
  out["train.epochs"] = std::to_string(c.epochs);
  out["train.max_steps"] = std::to_string(c.max_steps);
  out["train.seed"] = std::to_string(c.seed);
  out["train.weight_decay"] = format_double(c.weight_decay);
  out["train.contrastive_c"] = c.contrastive_c ? format_double(*c.contrastive_c) : "auto";
  out["train.contrastive_margin"] = format_double(c.contrastive_margin);
  out["train.alpha"] = format_double(c.alpha);
  out["train.eval_examples"] = std::to_string(c.eval_examples);
}

Dequantized prepare_batch(const TrainingSet& set, std::span<const std::size_t> indices, Pcg32& rng, double alpha) {
  const std::size_t d = set.data.cols();
  Tensor rows = Tensor::matrix(indices.size(), d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = set.data.row(indices[r]);
    std::copy(src.begin(), src.end(), rows.row(r).begin());
  }
  if (set.quantized) return dequantize(rows, rng, alpha);
  return {std::move(rows), Tensor::matrix(indices.size(), 1)};
}

Dequantized prepare_all(const TrainingSet& set, Pcg32& rng, double alpha) {
  const auto idx = iota_n(set.data.rows());
  return prepare_batch(set, idx, rng, alpha);
}

std::string metrics_csv_header() { return "epoch,step,objective,mean_nll_nats,bits_per_dim"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + std::to_string(m.step) + "," + format_double(m.objective) + "," +
         format_double(m.mean_nll) + "," + format_double(m.bits_per_dim);
}

TrainResult train(FlowModel& model, const TrainConfig& config, const TrainingSet& data, const TrainingSet* ood,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  const std::size_t n = data.data.empty() ? 0 : data.data.rows();
  if (n == 0) throw InputError("training data is empty");
  if (data.data.cols() != model.dims())
    throw InputError("training data has " + std::to_string(data.data.cols()) + " values per example, model expects " +
                     std::to_string(model.dims()));
  if (n < config.batch_size)
    throw ConfigError("train.batch_size " + std::to_string(config.batch_size) + " exceeds the " + std::to_string(n) +
                      " training examples");
  const bool contrastive = config.objective == Objective::kContrastive;
  if (contrastive) {
    if (!ood || ood->data.empty()) throw ConfigError("contrastive training needs OOD data");
    if (ood->data.cols() != model.dims()) throw InputError("OOD data shape does not match the model input");
  }

  const Dequantized metric_in = metric_batch(data, config.eval_examples, config.seed, 0, config.alpha);
  std::optional<Dequantized> metric_ood;
  if (contrastive) metric_ood = metric_batch(*ood, config.eval_examples, config.seed, 1, config.alpha);

  TrainResult result;
  if (contrastive)
    result.contrastive_c =
        config.contrastive_c.value_or(mean(batch_log_likelihood(model, metric_in, BnMode::kEval)) - config.contrastive_margin);

  TrainingState state;
  state.adam = make_adam_state(model.params());
  Pcg32 rng(config.seed, kTrainStream);
  AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  hyper.weight_decay = config.weight_decay;
  const double bits_scale = 1.0 / (static_cast<double>(model.dims()) * std::numbers::ln2);

  auto record = [&](std::size_t epoch) {
    const auto in_ll = batch_log_likelihood(model, metric_in, BnMode::kEval);
    EpochMetrics m;
    m.epoch = epoch;
    m.step = state.step;
    m.mean_nll = -mean(in_ll);
    m.bits_per_dim = m.mean_nll * bits_scale;
    m.objective = -m.mean_nll;
    if (contrastive) m.objective = contrastive_value(in_ll, batch_log_likelihood(model, *metric_ood, BnMode::kEval), *result.contrastive_c);
    result.log.push_back(m);
    if (on_epoch) on_epoch(m);
  };
  record(0);

  std::vector<std::size_t> order = iota_n(n);
  std::vector<std::size_t> ood_order = contrastive ? iota_n(ood->data.rows()) : std::vector<std::size_t>{};
  std::size_t ood_pos = ood_order.size();
  const std::size_t steps_per_epoch = n / config.batch_size;
  auto budget_left = [&] { return config.max_steps == 0 || state.step < config.max_steps; };

  for (std::size_t epoch = 1; epoch <= config.epochs && budget_left(); ++epoch) {
    shuffle(order, rng);
    for (std::size_t b = 0; b < steps_per_epoch && budget_left(); ++b) {
      const std::span<const std::size_t> idx(order.data() + b * config.batch_size, config.batch_size);
      const Pcg32::State before = rng.state();
      try {
        const Dequantized batch = prepare_batch(data, idx, rng, config.alpha);
        Tape tape;
        ParamBinder bind(tape, model.params(), true);
        model.params().zero_grad();
        ObjectiveTerms terms;
        if (contrastive) {
          std::vector<std::size_t> ood_idx;
          while (ood_idx.size() < config.batch_size) {
            if (ood_pos == ood_order.size()) {
              shuffle(ood_order, rng);
              ood_pos = 0;
            }
            ood_idx.push_back(ood_order[ood_pos++]);
          }
          const Dequantized ood_batch = prepare_batch(*ood, ood_idx, rng, config.alpha);
          terms = contrastive_objective(bind, model, batch, BnMode::kTrain, ood_batch, *result.contrastive_c);
        } else {
          terms = mle_objective(bind, model, batch, BnMode::kTrain);
        }
        tape.backward(tape.scale(terms.objective, -1.0));
        adam_step(model.params(), state.adam, hyper);
        model.update_running_stats(terms.batch_stats);
      } catch (const NumericError& e) {
        TrainingState last = state;
        last.rng = before;
        throw TrainingDiverged("training diverged at step " + std::to_string(state.step + 1) + " (epoch " +
                                   std::to_string(epoch) + "): " + e.what(),
                               std::move(last));
      }
      ++state.step;
    }
    state.rng = rng.state();
    record(epoch);
  }
  state.rng = rng.state();
  result.state = std::move(state);
  return result;
}

}  // namespace cflow
