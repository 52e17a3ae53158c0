#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>

#include "cflow/cli/run.hpp"
#include "criteria.hpp"

namespace cflow::acceptance {

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct Trained {
  RunConfig config;
  std::unique_ptr<FlowModel> model;
};

Trained train_cached(const Paths& paths, ConfigMap map) {
  map.erase("output.dir");
  Trained t{resolve_run_config(map), nullptr};
  const std::string text = format_config_text(t.config.resolved);
  const auto path = paths.cache / ("model-" + hex64(fnv1a(text)) + ".ckpt");
  if (std::filesystem::exists(path)) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config == t.config.resolved) {
      t.model = std::move(ckpt.model);
      return t;
    }
  }
  TrainRun run = run_training(t.config);
  std::filesystem::create_directories(paths.cache);
  save_checkpoint(path, *run.model, run.result.state, t.config.resolved);
  t.model = std::move(run.model);
  return t;
}

ConfigMap recipe(const Paths& paths, const std::string& name, std::uint64_t seed,
                 const std::map<std::string, std::string>& overrides = {}) {
  ConfigMap map = read_config_file(paths.recipes / name);
  map["run.seed"] = std::to_string(seed);
  for (const char* key : {"model.init_seed", "train.seed", "score.seed", "data.split_seed"}) map.erase(key);
  for (const auto& [k, v] : overrides) map[k] = v;
  return map;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct Evaluation {
  double auroc = 0.0;
  double mean_in = 0.0;
  double mean_ood = 0.0;
};

Evaluation evaluate(const Trained& t, BnMode mode = BnMode::kEval) {
  ScoringPolicy policy = t.config.score;
  policy.bn_mode = mode;
  const ScoreRun s = run_scoring(t.config, *t.model, policy);
  if (!s.ood) throw ConfigError("recipe has no data.ood to evaluate against");
  return {auroc(s.in.logp, s.ood->logp), mean(s.in.logp), mean(s.ood->logp)};
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

Evaluation baseline(const Paths& paths, std::uint64_t seed) {
  return evaluate(train_cached(paths, recipe(paths, "baseline_fashion.cfg", seed)));
}

bool baseline_fails(const Evaluation& e) { return e.auroc < 0.5 && e.mean_ood > e.mean_in; }

/// Seeds on which the baseline shows the failure, with their evaluations.
std::vector<std::pair<std::uint64_t, Evaluation>> failing_seeds(const Paths& paths) {
  std::vector<std::pair<std::uint64_t, Evaluation>> out;
  for (std::uint64_t seed : kSeeds) {
    const Evaluation e = baseline(paths, seed);
    if (baseline_fails(e)) out.emplace_back(seed, e);
  }
  return out;
}

}  // namespace

Outcome baseline_failure(const Paths& paths) {
  std::size_t failing = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const Evaluation e = baseline(paths, seed);
    failing += baseline_fails(e);
    detail += "seed " + std::to_string(seed) + ": auroc " + num(e.auroc) + ", mean logp in " + num(e.mean_in, 1) +
              " ood " + num(e.mean_ood, 1) + "; ";
  }
  detail += std::to_string(failing) + "/3 seeds with auroc < 0.5 and ood mean above in-distribution mean";
  return {failing >= 2, detail};
}

Outcome bottleneck_improvement(const Paths& paths) {
  const auto seeds = failing_seeds(paths);
  if (seeds.size() < 2) return {false, "baseline failure did not hold on 2 seeds, nothing to compare against"};
  bool ok = true;
  std::string detail;
  for (const auto& [seed, base] : seeds) {
    const Evaluation e = evaluate(train_cached(paths, recipe(paths, "bottleneck_l10.cfg", seed)));
    ok = ok && e.auroc >= base.auroc + 0.2;
    detail += "seed " + std::to_string(seed) + ": baseline " + num(base.auroc) + ", l=10 " + num(e.auroc) + "; ";
  }
  detail += "required gain 0.2 on every seed where the baseline failed";
  return {ok, detail};
}

Outcome cyclemask_improvement(const Paths& paths) {
  const auto seeds = failing_seeds(paths);
  if (seeds.size() < 2) return {false, "baseline failure did not hold on 2 seeds, nothing to compare against"};
  bool ok = true;
  std::string detail;
  for (const auto& [seed, base] : seeds) {
    const Evaluation cycle = evaluate(train_cached(paths, recipe(paths, "cyclemask.cfg", seed)));
    ok = ok && cycle.auroc > base.auroc;
    detail += "seed " + std::to_string(seed) + ": baseline " + num(base.auroc) + ", cycle " + num(cycle.auroc) + "; ";
  }
  detail += "cycle must beat the baseline on every seed where the baseline failed";
  return {ok, detail};
}

Outcome contrastive_separation(const Paths& paths) {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const Evaluation e = evaluate(train_cached(paths, recipe(paths, "contrastive.cfg", seed)));
    ok = ok && e.auroc > 0.95;
    detail += "seed " + std::to_string(seed) + ": auroc " + num(e.auroc) + "; ";
  }
  detail += "threshold 0.95 on every seed";
  return {ok, detail};
}

Outcome batchnorm_mode_effect(const Paths& paths) {
  const auto seeds = failing_seeds(paths);
  if (seeds.size() < 2) return {false, "baseline failure did not hold on 2 seeds"};
  bool ok = true;
  std::string detail;
  for (const auto& [seed, eval] : seeds) {
    const Trained t = train_cached(paths, recipe(paths, "baseline_fashion.cfg", seed));
    const Evaluation train_mode = evaluate(t, BnMode::kTrain);
    const double ood_gap = train_mode.mean_ood - eval.mean_ood;
    const double in_gap = train_mode.mean_in - eval.mean_in;
    ok = ok && ood_gap < 0.0 && std::abs(in_gap) < std::abs(ood_gap);
    detail += "seed " + std::to_string(seed) + ": ood train-eval " + num(ood_gap, 2) + ", in train-eval " +
              num(in_gap, 2) + "; ";
  }
  detail += "needs ood gap < 0 and |in gap| < |ood gap|";
  return {ok, detail};
}

Outcome vector_sanity(const Paths& paths) {
  bool ok = true;
  std::string detail;
  for (int cls : {0, 1}) {
    const Evaluation e = evaluate(
        train_cached(paths, recipe(paths, "tabular_gmm.cfg", 1, {{"data.class", std::to_string(cls)}})));
    ok = ok && e.auroc > 0.6;
    detail += "class " + std::to_string(cls) + " in-distribution: auroc " + num(e.auroc) + "; ";
  }
  detail += "threshold 0.6 per class (synthetic two-class Gaussian-mixture stand-in)";
  return {ok, detail};
}

}  // namespace cflow::acceptance
