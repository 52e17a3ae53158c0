#include "cflow/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>

#include "cflow/cli/run.hpp"
#include "cflow/data/images.hpp"
#include "cflow/data/vectors.hpp"
#include "cflow/inspect/inspect.hpp"
#include "cflow/training/gradient_suite.hpp"

namespace cflow {

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Shortest round-trip text that always shows a decimal point.
std::string decimal(double v) {
  std::string s = format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string pad(std::size_t v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

std::filesystem::path output_dir(const RunConfig& rc, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (rc.output_dir.empty()) throw ConfigError("no output directory: set output.dir or pass --out");
  return rc.output_dir;
}

struct TrainArgs {
  std::string config;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = resolve_run_config(read_config_file(a.config));
  const auto dir = output_dir(rc, a.out);
  rc.resolved["output.dir"] = dir.string();
  std::filesystem::create_directories(dir);
  write_text(dir / "resolved.cfg", format_config_text(rc.resolved));

  TrainRun run;
  run.model = std::make_unique<FlowModel>(rc.model);
  const TrainingSet* ood = rc.data.ood_train ? &rc.data.ood_train->set : nullptr;
  auto report = [&out](const EpochMetrics& m) {
    out << "epoch " << m.epoch << " step " << m.step << " nll " << format_double(m.mean_nll) << " bpd "
        << format_double(m.bits_per_dim) << "\n";
  };
  try {
    run.result = train(*run.model, rc.train, rc.data.train.set, ood, report);
  } catch (const TrainingDiverged& e) {
    // The model still holds the last good step.
    save_checkpoint(dir / "model.diverged.ckpt", *run.model, e.state(), rc.resolved);
    throw;
  }
  write_training_outputs(dir, rc, run);
  out << "wrote " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

struct ScoreArgs {
  std::string config;
  std::string checkpoint;
  std::string out;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const RunConfig rc = resolve_run_config(read_config_file(a.config));
  const auto dir = output_dir(rc, a.out);
  const auto ckpt_path = a.checkpoint.empty() ? dir / "model.ckpt" : std::filesystem::path(a.checkpoint);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.model->dims() != rc.model.input.volume())
    throw ConfigError("checkpoint model has " + std::to_string(ckpt.model->dims()) + " inputs, config data has " +
                      std::to_string(rc.model.input.volume()));
  std::filesystem::create_directories(dir);
  const ScoreRun scores = run_scoring(rc, *ckpt.model, rc.score);
  auto emit = [&](const ScoreSet& s) {
    const auto path = dir / ("scores_" + s.dataset + ".csv");
    write_scores_csv(path, s);
    out << "wrote " << path.string() << "\n";
  };
  emit(scores.in);
  if (scores.ood) {
    emit(*scores.ood);
    out << "auroc " << decimal(auroc(scores.in.logp, scores.ood->logp)) << "\n";
  }
  return 0;
}

struct AurocArgs {
  std::string in;
  std::string ood;
  std::optional<double> tau;
  std::string out;
};

int cmd_auroc(const AurocArgs& a, std::ostream& out) {
  const ScoreSet in = read_scores_csv(a.in);
  const ScoreSet ood = read_scores_csv(a.ood);
  const double area = auroc(in.logp, ood.logp);
  out << decimal(area) << "\n";
  std::string csv = "metric,value\nauroc," + format_double(area) + "\n";
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  csv += "mean_in_logp_nats," + format_double(mean(in.logp)) + "\n";
  csv += "mean_ood_logp_nats," + format_double(mean(ood.logp)) + "\n";
  csv += "n_in," + std::to_string(in.logp.size()) + "\nn_ood," + std::to_string(ood.logp.size()) + "\n";
  if (a.tau) {
    const auto m = threshold_metrics(in.logp, ood.logp, *a.tau);
    out << "tau " << format_double(*a.tau) << " tpr " << format_double(m.tpr) << " fpr " << format_double(m.fpr)
        << " accuracy " << format_double(m.accuracy) << "\n";
    csv += "tau," + format_double(*a.tau) + "\ntpr," + format_double(m.tpr) + "\nfpr," + format_double(m.fpr) +
           "\naccuracy," + format_double(m.accuracy) + "\n";
  }
  if (!a.out.empty()) write_text(a.out, csv);
  return 0;
}

struct HistArgs {
  std::string scores;
  std::size_t bins = 50;
  std::string range;
  std::string out;
};

int cmd_hist(const HistArgs& a, std::ostream& out) {
  const ScoreSet s = read_scores_csv(a.scores);
  if (a.bins == 0) throw ConfigError("--bins must be at least 1");
  double lo = *std::min_element(s.logp.begin(), s.logp.end());
  double hi = std::nextafter(*std::max_element(s.logp.begin(), s.logp.end()), HUGE_VAL);
  if (!a.range.empty()) {
    const auto colon = a.range.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("");
      lo = std::stod(a.range.substr(0, colon));
      hi = std::stod(a.range.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("--range '" + a.range + "' should look like <lo>:<hi>");
    }
  }
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) throw ConfigError("histogram range must be finite with lo < hi");
  const Histogram h = histogram(s.logp, a.bins, lo, hi);
  write_histogram_csv(a.out, h);
  out << "wrote " << a.out << " (" << s.logp.size() << " scores, " << h.underflow << " below, " << h.overflow
      << " above)\n";
  return 0;
}

struct InspectArgs {
  std::string checkpoint;
  std::string data;
  std::size_t index = 0;
  std::string out;
  std::size_t samples = 40;
  std::string bn_mode = "eval";
  std::uint64_t seed = 0;
  std::string region;
  std::size_t count = 4;
};

struct InspectInput {
  Checkpoint ckpt;
  NamedSet data;
  Tensor pixels;  // 1 x D
  double alpha = kDefaultLogitAlpha;
};

InspectInput load_inspect_input(const InspectArgs& a) {
  InspectInput in{load_checkpoint(a.checkpoint), load_image_source(a.data, "data"), {}, kDefaultLogitAlpha};
  if (!in.data.set.quantized) throw ConfigError("inspection needs an image data source");
  if (in.data.shape.volume() != in.ckpt.model->dims())
    throw ConfigError("data shape " + in.data.shape.to_string() + " does not match the model input " +
                      in.ckpt.model->input_shape().to_string());
  if (a.index >= in.data.set.data.rows())
    throw ConfigError("--index " + std::to_string(a.index) + " is out of range for " +
                      std::to_string(in.data.set.data.rows()) + " images");
  in.pixels = Tensor::matrix(1, in.data.shape.volume());
  for (std::size_t k = 0; k < in.pixels.size(); ++k) in.pixels[k] = in.data.set.data.at(a.index, k);
  if (auto it = in.ckpt.config.find("train.alpha"); it != in.ckpt.config.end()) in.alpha = std::stod(it->second);
  return in;
}

ConfigMap inspect_record(const std::string& command, const InspectArgs& a) {
  ConfigMap m;
  m[command + ".checkpoint"] = a.checkpoint;
  m[command + ".data"] = a.data;
  m[command + ".index"] = std::to_string(a.index);
  m[command + ".seed"] = std::to_string(a.seed);
  return m;
}

int cmd_visualize(const InspectArgs& a, std::ostream& out) {
  const InspectInput in = load_inspect_input(a);
  const FlowModel& model = *in.ckpt.model;
  const ImageShape shape = model.input_shape();
  const std::filesystem::path dir = a.out;
  std::filesystem::create_directories(dir);
  std::vector<NormalizedImage> written;

  written.push_back(write_pnm(dir / "input.pgm", in.pixels.data(), shape));
  const BnMode mode = parse_bn_mode(a.bn_mode);
  if (mode == BnMode::kTrain) throw ConfigError("visualize works on a single image; use --bn-mode eval");
  const Tensor latent = latent_image(model, in.pixels, a.samples, mode, a.seed, in.alpha);
  written.push_back(write_pnm(dir / "latent.pgm", latent.data(), shape));

  Pcg32 rng(a.seed, a.index);
  const Tensor x = dequantize(in.pixels, rng, in.alpha).values;
  for (const LayerTrace& tr : coupling_trace(model, x)) {
    const std::string stem = "coupling" + pad(tr.coupling, 2) + "_layer" + pad(tr.layer, 2);
    written.push_back(write_pnm(dir / (stem + "_activation.pgm"), tr.activation.data(), shape));
    written.push_back(write_pnm(dir / (stem + "_s.pgm"), tr.s.data(), shape));
    written.push_back(write_pnm(dir / (stem + "_t.pgm"), tr.t.data(), shape));
    std::vector<double> predicted(tr.predicted.begin(), tr.predicted.end());
    written.push_back(write_pnm(dir / (stem + "_predicted.pgm"), predicted, shape));
  }
  write_image_sidecar(dir / "images.csv", written);
  ConfigMap record = inspect_record("visualize", a);
  record["visualize.samples"] = std::to_string(a.samples);
  record["visualize.bn_mode"] = a.bn_mode;
  write_text(dir / "visualize.cfg", format_config_text(record));
  out << "wrote " << written.size() << " images to " << dir.string() << "\n";
  return 0;
}

int cmd_resample(const InspectArgs& a, std::ostream& out) {
  const InspectInput in = load_inspect_input(a);
  const FlowModel& model = *in.ckpt.model;
  const ImageShape shape = model.input_shape();
  std::size_t top = shape.h / 4, left = shape.w / 4, size = shape.h / 2;
  if (!a.region.empty()) {
    unsigned long t = 0, l = 0, s = 0;
    char extra = 0;
    if (std::sscanf(a.region.c_str(), "%lu,%lu,%lu%c", &t, &l, &s, &extra) != 3)
      throw ConfigError("--region '" + a.region + "' should look like <top>,<left>,<size>");
    top = t, left = l, size = s;
  }
  const auto region = square_region(shape, top, left, size);
  const std::filesystem::path dir = a.out;
  std::filesystem::create_directories(dir);
  std::vector<NormalizedImage> written;

  Pcg32 rng(a.seed, a.index);
  const Tensor x = dequantize(in.pixels, rng, in.alpha).values;
  written.push_back(write_pnm(dir / "original.pgm", logit_to_pixels(x, in.alpha).data(), shape));
  ImageShape plane{1, shape.h, shape.w};
  std::vector<double> mask(region.begin(), region.end());
  written.push_back(write_pnm(dir / "region.pgm", mask, plane));
  for (std::size_t k = 0; k < a.count; ++k) {
    const Tensor y = resample_latent_region(model, x, region, a.seed + k);
    written.push_back(write_pnm(dir / ("resample" + pad(k, 2) + ".pgm"), logit_to_pixels(y, in.alpha).data(), shape));
  }
  write_image_sidecar(dir / "images.csv", written);
  ConfigMap record = inspect_record("resample", a);
  record["resample.region"] = std::to_string(top) + "," + std::to_string(left) + "," + std::to_string(size);
  record["resample.count"] = std::to_string(a.count);
  write_text(dir / "resample.cfg", format_config_text(record));
  out << "wrote " << written.size() << " images to " << dir.string() << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  std::size_t failed = 0;
  const auto results = all_gradient_checks(seed);
  for (const auto& r : results) {
    out << (r.passed() ? "PASS " : "FAIL ") << r.name << " relative_error=" << format_double(r.relative_error)
        << " tolerance=" << format_double(r.tolerance) << "\n";
    failed += !r.passed();
  }
  out << (results.size() - failed) << "/" << results.size() << " gradient checks passed\n";
  if (failed) throw NumericError(std::to_string(failed) + " gradient checks failed");
  return 0;
}

struct MaskArgs {
  std::string kind;
  std::string shape;
  std::size_t phase = 0;
};

int cmd_masks(const MaskArgs& a, std::ostream& out) {
  out << render_mask(make_mask(parse_mask_kind(a.kind), parse_image_shape(a.shape), a.phase));
  return 0;
}

struct GenArgs {
  std::string family;
  std::size_t n = 1000;
  std::size_t res = 16;
  std::size_t dims = 10;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  if (a.family == "gmm") {
    write_vectors_csv(a.out, gen_gaussian_mixture_2class(a.n, a.dims, a.seed));
    out << "wrote " << 2 * a.n << " vectors to " << a.out << "\n";
    return 0;
  }
  const ImageDataset ds = gen_synthetic(parse_synthetic_family(a.family), a.n, a.res, a.seed);
  write_idx(a.out, ds);
  out << "wrote " << ds.size() << " images of " << ds.shape.to_string() << " to " << a.out << "\n";
  return 0;
}

int report(std::ostream& err, const std::string& category, const std::string& detail, int code) {
  std::string first = detail;
  std::replace(first.begin(), first.end(), '\n', ' ');
  err << "error: " << category << ": " << first << "\n";
  return code;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coupling-flow density models and likelihood-based OOD detection"};
  app.name("cflow");
  app.require_subcommand(1);
  std::function<int()> action;

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a flow; writes model.ckpt, metrics.csv and resolved.cfg");
  train->add_option("--config", train_args.config, "Run config file")->required();
  train->add_option("--out", train_args.out, "Output directory (overrides output.dir)");
  train->callback([&] { action = [&] { return cmd_train(train_args, out); }; });

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Score the test and OOD sets of a run");
  score->add_option("--config", score_args.config, "Run config file")->required();
  score->add_option("--checkpoint", score_args.checkpoint, "Checkpoint (default <out>/model.ckpt)");
  score->add_option("--out", score_args.out, "Output directory (overrides output.dir)");
  score->callback([&] { action = [&] { return cmd_score(score_args, out); }; });

  AurocArgs auroc_args;
  double tau = 0.0;
  auto* auroc_cmd = app.add_subcommand("auroc", "AUROC of in-distribution vs OOD score files");
  auroc_cmd->add_option("in", auroc_args.in, "In-distribution scores CSV")->required();
  auroc_cmd->add_option("ood", auroc_args.ood, "OOD scores CSV")->required();
  auto* tau_opt = auroc_cmd->add_option("--tau", tau, "Also report metrics at this threshold");
  auroc_cmd->add_option("--out", auroc_args.out, "Metric CSV");
  auroc_cmd->callback([&] {
    if (tau_opt->count()) auroc_args.tau = tau;
    action = [&] { return cmd_auroc(auroc_args, out); };
  });

  HistArgs hist_args;
  auto* hist = app.add_subcommand("hist", "Histogram of a score file");
  hist->add_option("scores", hist_args.scores, "Scores CSV")->required();
  hist->add_option("--bins", hist_args.bins, "Bin count")->capture_default_str();
  hist->add_option("--range", hist_args.range, "<lo>:<hi> (default: the score range)");
  hist->add_option("--out", hist_args.out, "Histogram CSV")->required();
  hist->callback([&] { action = [&] { return cmd_hist(hist_args, out); }; });

  InspectArgs vis_args;
  auto* vis = app.add_subcommand("visualize", "Latent image and coupling traces of one example");
  vis->add_option("--checkpoint", vis_args.checkpoint)->required();
  vis->add_option("--data", vis_args.data, "Image data source")->required();
  vis->add_option("--index", vis_args.index)->capture_default_str();
  vis->add_option("--samples", vis_args.samples, "Dequantization draws averaged")->capture_default_str();
  vis->add_option("--bn-mode", vis_args.bn_mode)->capture_default_str();
  vis->add_option("--seed", vis_args.seed)->capture_default_str();
  vis->add_option("--out", vis_args.out, "Output directory")->required();
  vis->callback([&] { action = [&] { return cmd_visualize(vis_args, out); }; });

  InspectArgs res_args;
  auto* res = app.add_subcommand("resample", "Redraw the latent variables of a square region");
  res->add_option("--checkpoint", res_args.checkpoint)->required();
  res->add_option("--data", res_args.data, "Image data source")->required();
  res->add_option("--index", res_args.index)->capture_default_str();
  res->add_option("--region", res_args.region, "<top>,<left>,<size> (default: centered half-size square)");
  res->add_option("--count", res_args.count, "Number of redraws")->capture_default_str();
  res->add_option("--seed", res_args.seed)->capture_default_str();
  res->add_option("--out", res_args.out, "Output directory")->required();
  res->callback([&] { action = [&] { return cmd_resample(res_args, out); }; });

  std::uint64_t grad_seed = 0;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  grad->add_option("--seed", grad_seed)->capture_default_str();
  grad->callback([&] { action = [&] { return cmd_gradcheck(grad_seed, out); }; });

  MaskArgs mask_args;
  auto* masks = app.add_subcommand("masks", "Print a coupling mask pattern");
  masks->add_option("--kind", mask_args.kind, "checkerboard, channelwise, horizontal or cycle")->required();
  masks->add_option("--shape", mask_args.shape, "CxHxW")->required();
  masks->add_option("--phase", mask_args.phase)->capture_default_str();
  masks->callback([&] { action = [&] { return cmd_masks(mask_args, out); }; });

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic IDX image file (or a gmm CSV)");
  gen->add_option("--family", gen_args.family, "blobs, stripes, patches or gmm")->required();
  gen->add_option("--n", gen_args.n, "Images (per class for gmm)")->capture_default_str();
  gen->add_option("--res", gen_args.res, "Image side")->capture_default_str();
  gen->add_option("--dims", gen_args.dims, "Vector dimension for gmm")->capture_default_str();
  gen->add_option("--seed", gen_args.seed)->capture_default_str();
  gen->add_option("--out", gen_args.out, "Output file")->required();
  gen->callback([&] { action = [&] { return cmd_gen_data(gen_args, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return report(err, "usage", e.what(), 2);
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    return report(err, e.category(), e.what(), 2);
  } catch (const Error& e) {
    return report(err, e.category(), e.what(), 1);
  } catch (const std::filesystem::filesystem_error& e) {
    return report(err, "io", e.what(), 1);
  } catch (const std::exception& e) {
    return report(err, "internal", e.what(), 1);
  }
}

}  // namespace cflow
