#include "cflow/cli/run.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cflow/data/images.hpp"
#include "cflow/data/vectors.hpp"

namespace cflow {

namespace {

std::uint64_t parse_count(const std::string& text, const std::string& what, const std::string& spec) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("data source '" + spec + "': " + what + " '" + text + "' is not a non-negative integer");
  return v;
}

double parse_real(const std::string& text, const std::string& what, const std::string& spec) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("data source '" + spec + "': " + what + " '" + text + "' is not a number");
  return v;
}

void expect_args(const SourceSpec& s, std::size_t n, const std::string& spec, const std::string& form) {
  if (s.args.size() != n) throw ConfigError("data source '" + spec + "' should look like " + form);
}

NamedSet from_images(const ImageDataset& ds, const std::string& name) {
  return {name, {ds.all(), true}, ds.shape};
}

NamedSet from_vectors(const VectorDataset& ds, const std::string& name) {
  return {name, {ds.vectors, false}, ImageShape{1, 1, ds.dims()}};
}

bool is_labeled_vector_source(const SourceSpec& s) { return s.kind == "csv" || s.kind == "gmm"; }

VectorDataset load_labeled_vectors(const SourceSpec& s, const std::string& spec) {
  if (s.kind == "csv") {
    expect_args(s, 1, spec, "csv:<path>");
    return load_vectors_csv(s.args[0]);
  }
  expect_args(s, 3, spec, "gmm:<n per class>:<dims>:<seed>");
  return gen_gaussian_mixture_2class(parse_count(s.args[0], "n", spec), parse_count(s.args[1], "dims", spec),
                                     parse_count(s.args[2], "seed", spec));
}

NamedSet subset(const NamedSet& s, const std::vector<std::size_t>& rows, const std::string& name) {
  const std::size_t d = s.set.data.cols();
  Tensor out = Tensor::matrix(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) = s.set.data.at(rows[r], c);
  return {name, {std::move(out), s.set.quantized}, s.shape};
}

}  // namespace

SourceSpec parse_source_spec(const std::string& text) {
  SourceSpec s;
  std::size_t start = 0;
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0)
    throw ConfigError("data source '" + text + "' needs a kind prefix (synthetic:, idx:, csv:, gmm: or moons:)");
  s.kind = text.substr(0, colon);
  start = colon + 1;
  if (s.kind == "idx" || s.kind == "csv") {
    s.args.push_back(text.substr(start));  // paths may contain ':'
    return s;
  }
  while (true) {
    const auto next = text.find(':', start);
    s.args.push_back(text.substr(start, next == std::string::npos ? std::string::npos : next - start));
    if (next == std::string::npos) break;
    start = next + 1;
  }
  return s;
}

NamedSet load_image_source(const std::string& spec, const std::string& name) {
  const SourceSpec s = parse_source_spec(spec);
  if (s.kind == "synthetic") {
    expect_args(s, 4, spec, "synthetic:<family>:<n>:<resolution>:<seed>");
    return from_images(gen_synthetic(parse_synthetic_family(s.args[0]), parse_count(s.args[1], "n", spec),
                                     parse_count(s.args[2], "resolution", spec), parse_count(s.args[3], "seed", spec)),
                       name);
  }
  if (s.kind == "idx") return from_images(load_idx(s.args[0]), name);
  if (s.kind == "moons") {
    expect_args(s, 3, spec, "moons:<n>:<noise>:<seed>");
    const Tensor x = gen_two_moons(parse_count(s.args[0], "n", spec), parse_real(s.args[1], "noise", spec),
                                   parse_count(s.args[2], "seed", spec));
    return {name, {x, false}, ImageShape{1, 1, 2}};
  }
  if (is_labeled_vector_source(s))
    throw ConfigError("data source '" + spec + "' is labeled vector data; set data.class and use it as data.train");
  throw ConfigError("unknown data source kind '" + s.kind + "'");
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ScoringPolicy read_scoring_policy(ConfigReader& r, double alpha) {
  ScoringPolicy p;
  p.bn_mode = parse_bn_mode(r.get_string("score.bn_mode", "eval"));
  p.seed = r.get_uint("score.seed", 0);
  p.noise_samples = r.get_uint("score.noise_samples", 1);
  p.batch_size = r.get_uint("score.batch_size", 256);
  p.workers = r.get_uint("score.workers", 1);
  p.alpha = alpha;
  if (p.noise_samples == 0) throw ConfigError("score.noise_samples must be at least 1");
  if (p.batch_size == 0) throw ConfigError("score.batch_size must be positive");
  if (p.workers == 0) throw ConfigError("score.workers must be at least 1");
  return p;
}

void write_scoring_policy(const ScoringPolicy& p, ConfigMap& out) {
  out["score.bn_mode"] = std::string(bn_mode_name(p.bn_mode));
  out["score.seed"] = std::to_string(p.seed);
  out["score.noise_samples"] = std::to_string(p.noise_samples);
  out["score.batch_size"] = std::to_string(p.batch_size);
  out["score.workers"] = std::to_string(p.workers);
}

RunConfig resolve_run_config(const ConfigMap& raw) {
  ConfigMap map = raw;
  if (auto it = raw.find("run.seed"); it != raw.end())
    for (const char* key : {"model.init_seed", "train.seed", "score.seed", "data.split_seed"})
      map.try_emplace(key, it->second);

  ConfigReader r(map);
  RunConfig rc;
  // Read every known key first so unknown keys fail before any data loads.
  const auto run_seed = r.raw("run.seed");
  const std::string train_spec = r.get_string("data.train", "");
  const auto test_spec = r.raw("data.test");
  const auto ood_spec = r.raw("data.ood");
  const auto ood_train_spec = r.raw("data.ood_train");
  const auto class_text = r.raw("data.class");
  const double test_fraction = r.get_double("data.test_fraction", class_text ? 0.1 : 0.0);
  const std::uint64_t split_seed = r.get_uint("data.split_seed", 0);
  const double filter_threshold = r.get_double("data.filter_threshold", 0.1);
  const auto input_text = r.raw("model.input");
  rc.train = read_train_config(r);
  rc.score = read_scoring_policy(r, rc.train.alpha);
  rc.output_dir = r.get_string("output.dir", "");
  rc.model = read_flow_config(r);  // input is replaced by the data shape below when unset
  r.reject_unknown();

  if (train_spec.empty()) throw ConfigError("data.train is required");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("data.test_fraction must be in [0, 1)");
  if (!(filter_threshold > 0.0 && filter_threshold <= 1.0))
    throw ConfigError("data.filter_threshold must be in (0, 1]");

  const SourceSpec train_source = parse_source_spec(train_spec);
  if (is_labeled_vector_source(train_source)) {
    if (!class_text) throw ConfigError("data.train '" + train_spec + "' is labeled vector data and needs data.class");
    if (test_spec || ood_spec)
      throw ConfigError("data.test and data.ood come from the class split when data.class is set");
    int cls = 0;
    auto [ptr, ec] = std::from_chars(class_text->data(), class_text->data() + class_text->size(), cls);
    if (ec != std::errc() || ptr != class_text->data() + class_text->size())
      throw ConfigError("data.class '" + *class_text + "' is not an integer");
    const VectorDataset all = load_labeled_vectors(train_source, train_spec);
    const ClassSplit split = split_by_class(all, cls, split_seed, test_fraction);
    const Standardization record = fit_tabular(split.train, filter_threshold);
    rc.data.train = from_vectors(apply_standardization(split.train, record), "class" + *class_text + "-train");
    rc.data.test = from_vectors(apply_standardization(split.test, record), "class" + *class_text + "-test");
    rc.data.ood = from_vectors(apply_standardization(split.ood, record), "other-classes");
  } else {
    if (class_text) throw ConfigError("data.class only applies to labeled vector sources");
    rc.data.train = load_image_source(train_spec, "train");
    if (test_spec) {
      rc.data.test = load_image_source(*test_spec, "test");
    } else if (test_fraction > 0.0) {
      const auto split = random_split(rc.data.train.set.data.rows(), test_fraction, split_seed);
      rc.data.test = subset(rc.data.train, split.test, "test");
      rc.data.train = subset(rc.data.train, split.train, "train");
    }
    if (ood_spec) rc.data.ood = load_image_source(*ood_spec, "ood");
  }
  if (ood_train_spec) rc.data.ood_train = load_image_source(*ood_train_spec, "ood-train");

  if (!input_text) rc.model.input = rc.data.train.shape;

  auto check_shape = [&](const std::optional<NamedSet>& s) {
    if (s && s->shape.volume() != rc.model.input.volume())
      throw ConfigError("data set '" + s->name + "' has shape " + s->shape.to_string() + " but model.input is " +
                        rc.model.input.to_string());
  };
  check_shape(rc.data.train);
  check_shape(rc.data.test);
  check_shape(rc.data.ood);
  check_shape(rc.data.ood_train);
  if (rc.train.objective == Objective::kContrastive && !rc.data.ood_train)
    throw ConfigError("train.objective = contrastive needs data.ood_train");

  ConfigMap& out = rc.resolved;
  write_flow_config(rc.model, out);
  write_train_config(rc.train, out);
  write_scoring_policy(rc.score, out);
  out["data.train"] = train_spec;
  if (test_spec) out["data.test"] = *test_spec;
  if (ood_spec) out["data.ood"] = *ood_spec;
  if (ood_train_spec) out["data.ood_train"] = *ood_train_spec;
  if (class_text) out["data.class"] = *class_text;
  out["data.test_fraction"] = format_double(test_fraction);
  out["data.split_seed"] = std::to_string(split_seed);
  out["data.filter_threshold"] = format_double(filter_threshold);
  if (!rc.output_dir.empty()) out["output.dir"] = rc.output_dir.string();
  if (run_seed) out["run.seed"] = *run_seed;
  return rc;
}

TrainRun run_training(const RunConfig& config, const std::function<void(const EpochMetrics&)>& on_epoch) {
  TrainRun run;
  run.model = std::make_unique<FlowModel>(config.model);
  const TrainingSet* ood = config.data.ood_train ? &config.data.ood_train->set : nullptr;
  run.result = train(*run.model, config.train, config.data.train.set, ood, on_epoch);
  return run;
}

void write_training_outputs(const std::filesystem::path& dir, const RunConfig& config, const TrainRun& run) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "model.ckpt", *run.model, run.result.state, config.resolved);

  std::string metrics = metrics_csv_header() + "\n";
  for (const auto& m : run.result.log) metrics += metrics_csv_row(m) + "\n";
  auto write_text = [](const std::filesystem::path& p, const std::string& text) {
    write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  };
  write_text(dir / "metrics.csv", metrics);
  write_text(dir / "resolved.cfg", format_config_text(config.resolved));

  ConfigMap summary;
  summary["result.steps"] = std::to_string(run.result.state.step);
  if (!run.result.log.empty()) {
    summary["result.final_mean_nll_nats"] = format_double(run.result.log.back().mean_nll);
    summary["result.final_bits_per_dim"] = format_double(run.result.log.back().bits_per_dim);
  }
  if (run.result.contrastive_c) summary["result.contrastive_c"] = format_double(*run.result.contrastive_c);
  write_text(dir / "summary.cfg", format_config_text(summary));
}

ScoreRun run_scoring(const RunConfig& config, const FlowModel& model, const ScoringPolicy& policy) {
  ScoreRun out;
  const NamedSet& in = config.data.test ? *config.data.test : config.data.train;
  out.in = score_dataset(model, in.set, in.name, policy);
  if (config.data.ood) out.ood = score_dataset(model, config.data.ood->set, config.data.ood->name, policy);
  return out;
}

}  // namespace cflow
