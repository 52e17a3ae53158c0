#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "cflow/cli/run.hpp"
#include "cflow/data/images.hpp"
#include "cflow/training/gradient_suite.hpp"
#include "criteria.hpp"

namespace cflow::acceptance {

namespace {

Eigen::MatrixXd numeric_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5) {
  const std::size_t n = x.size();
  const std::size_t m = f(x).size();
  Eigen::MatrixXd j(m, n);
  Tensor probe = x;
  for (std::size_t k = 0; k < n; ++k) {
    const double saved = probe[k];
    probe[k] = saved + h;
    const Tensor up = f(probe);
    probe[k] = saved - h;
    const Tensor down = f(probe);
    probe[k] = saved;
    for (std::size_t i = 0; i < m; ++i)
      j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (up[i] - down[i]) / (2 * h);
  }
  return j;
}

double log_abs_det(const Eigen::MatrixXd& j) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(j);
  const Eigen::MatrixXd& u = lu.matrixLU();
  double s = 0.0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) s += std::log(std::abs(u(i, i)));
  return s;
}

void randomize_running_stats(FlowModel& m, Pcg32& rng) {
  for (auto& l : m.layers())
    if (auto* bn = std::get_if<BatchNormLayer>(&l))
      for (std::size_t d = 0; d < bn->dims(); ++d) {
        bn->running_mean()[d] = rng.uniform() - 0.5;
        bn->running_var()[d] = 0.5 + rng.uniform();
      }
}

Tensor normal_row(std::size_t n, Pcg32& rng) {
  Tensor x = Tensor::matrix(1, n);
  rng.fill_normal(x.data());
  return x;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

Outcome invertibility() {
  constexpr double kTolerance = 1e-8;
  double worst = 0.0;
  std::string worst_kind;
  for (MaskKind kind : {MaskKind::kCheckerboard, MaskKind::kChannelwise, MaskKind::kHorizontal, MaskKind::kCycle}) {
    FlowConfig c;
    c.input = {2, 8, 8};
    c.scales = 2;
    c.coupling_layers = 2;
    c.mask = kind;
    c.stnet = StNetConfig{16, 2, 0};
    FlowModel m(c);
    Pcg32 rng(31, static_cast<std::uint64_t>(kind));
    m.randomize(rng, 0.3);
    randomize_running_stats(m, rng);
    Tensor x = Tensor::matrix(100, m.dims());
    rng.fill_normal(x.data());
    const Tensor back = m.to_data(m.latent(x, BnMode::kEval));
    double err = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) err = std::max(err, std::abs(back[k] - x[k]));
    if (!std::isfinite(err)) return {false, std::string(mask_kind_name(kind)) + " round trip is not finite"};
    if (worst_kind.empty() || err > worst) {
      worst = err;
      worst_kind = mask_kind_name(kind);
    }
  }
  return {worst < kTolerance, "max |x - f(f^-1(x))| = " + fmt(worst) + " (worst mask " + worst_kind +
                                  "), tolerance " + fmt(kTolerance)};
}

Outcome logdet_exactness() {
  constexpr double kRelative = 1e-4;
  double worst = 0.0;
  std::string worst_case;
  auto compare = [&](const std::string& name, double analytic, double numeric) {
    const double err = std::abs(analytic - numeric) / std::max(std::abs(numeric), 1.0);
    if (err >= worst) {
      worst = err;
      worst_case = name;
    }
  };
  Pcg32 rng(32, 0);

  // Single coupling layers of every mask kind (flat flows, no batch norm).
  for (MaskKind kind : {MaskKind::kCheckerboard, MaskKind::kChannelwise, MaskKind::kHorizontal, MaskKind::kCycle}) {
    FlowConfig c;
    c.input = {2, 2, 4};
    c.scales = 0;
    c.coupling_layers = 1;
    c.mask = kind;
    c.batchnorm = false;
    c.stnet = StNetConfig{8, 1, 0};
    FlowModel m(c);
    m.randomize(rng, 0.5);
    const Tensor x = normal_row(m.dims(), rng);
    compare(std::string("coupling ") + std::string(mask_kind_name(kind)), m.log_det(x, BnMode::kEval)[0],
            log_abs_det(numeric_jacobian([&](const Tensor& v) { return m.latent(v, BnMode::kEval); }, x)));
  }

  // Batch norm alone (eval mode is a per-example bijection).
  {
    ParameterSet params;
    BatchNormLayer bn(0, 12, params, 0.1, 1e-5);
    for (auto& p : params)
      for (auto& v : p.value.data()) v = rng.uniform() - 0.5;
    for (std::size_t d = 0; d < 12; ++d) {
      bn.running_mean()[d] = rng.uniform() - 0.5;
      bn.running_var()[d] = 0.5 + rng.uniform();
    }
    auto apply = [&](const Tensor& v, bool want_logdet) {
      Tape t;
      ParamBinder bind(t, params);
      auto r = bn.apply(bind, t.constant(v), Direction::kToLatent, BnMode::kEval);
      return want_logdet ? t.value(r.logdet) : t.value(r.y);
    };
    const Tensor x = normal_row(12, rng);
    compare("batchnorm", apply(x, true)[0],
            log_abs_det(numeric_jacobian([&](const Tensor& v) { return apply(v, false); }, x)));
  }

  // Composed: two scales with squeezes, factor-out and batch norm on 16 dims.
  {
    FlowConfig c;
    c.input = {1, 4, 4};
    c.scales = 2;
    c.coupling_layers = 2;
    c.stnet = StNetConfig{8, 1, 0};
    FlowModel m(c);
    m.randomize(rng, 0.4);
    randomize_running_stats(m, rng);
    const Tensor x = normal_row(m.dims(), rng);
    compare("composed", m.log_det(x, BnMode::kEval)[0],
            log_abs_det(numeric_jacobian([&](const Tensor& v) { return m.latent(v, BnMode::kEval); }, x)));
  }
  return {worst < kRelative, "worst relative log-det error " + fmt(worst) + " (" + worst_case + "), tolerance " +
                                 fmt(kRelative)};
}

Outcome gradient_suite() {
  std::size_t total = 0, failed = 0;
  std::string first_failure;
  for (std::uint64_t seed : {0u, 1u, 2u})
    for (const auto& r : all_gradient_checks(seed)) {
      ++total;
      if (!r.passed()) {
        ++failed;
        if (first_failure.empty()) first_failure = r.name + " (seed " + std::to_string(seed) + ")";
      }
    }
  return {failed == 0, std::to_string(total - failed) + "/" + std::to_string(total) + " checks within tolerance" +
                           (failed ? ", first failure: " + first_failure : std::string())};
}

Outcome determinism(const std::filesystem::path& recipes) {
  // Checkpoints from two identical short runs.
  ConfigMap map = read_config_file(recipes / "baseline_fashion.cfg");
  map["train.max_steps"] = "20";
  map.erase("output.dir");
  const RunConfig rc = resolve_run_config(map);
  auto encode_run = [&] {
    TrainRun run = run_training(rc);
    return std::make_pair(encode_checkpoint(*run.model, run.result.state, rc.resolved), std::move(run));
  };
  auto [bytes_a, run_a] = encode_run();
  auto [bytes_b, run_b] = encode_run();
  if (bytes_a != bytes_b) return {false, "two identical runs produced different checkpoints"};

  // Round trip, then compare scores bit for bit.
  const Checkpoint loaded = decode_checkpoint(bytes_a);
  ScoringPolicy policy = rc.score;
  const TrainingSet& probe = rc.data.test ? rc.data.test->set : rc.data.train.set;
  const ScoreSet before = score_dataset(*run_a.model, probe, "probe", policy);
  const ScoreSet after = score_dataset(*loaded.model, probe, "probe", policy);
  if (before.logp.size() != after.logp.size() ||
      std::memcmp(before.logp.data(), after.logp.data(), before.logp.size() * sizeof(double)) != 0)
    return {false, "scores changed after a checkpoint round trip"};
  if (encode_checkpoint(*loaded.model, loaded.state, loaded.config) != bytes_a)
    return {false, "re-encoding a loaded checkpoint changed its bytes"};

  // IDX write then load then write.
  const auto dir = std::filesystem::temp_directory_path() / "cflow_acceptance_idx";
  std::filesystem::create_directories(dir);
  const ImageDataset ds = gen_synthetic(SyntheticFamily::kPatches, 37, 16, 5);
  write_idx(dir / "a.idx", ds);
  const auto first = read_file_bytes(dir / "a.idx");
  write_idx(dir / "b.idx", load_idx(dir / "a.idx"));
  const auto second = read_file_bytes(dir / "b.idx");
  std::filesystem::remove_all(dir);
  if (first != second) return {false, "IDX write of a loaded file differs from the original"};
  return {true, "checkpoints identical (" + std::to_string(bytes_a.size()) + " bytes), " +
                    std::to_string(before.logp.size()) + " scores bit-identical after round trip, IDX round trip "
                    "byte-identical"};
}

Outcome auroc_oracle() {
  Pcg32 rng(12, 0);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(50), m = 1 + rng.below(50);
    const bool ties = trial % 2 == 0;
    std::vector<double> in(n), ood(m);
    for (auto& v : in) v = ties ? static_cast<double>(rng.below(8)) : rng.normal();
    for (auto& v : ood) v = ties ? static_cast<double>(rng.below(8)) : rng.normal();
    double pairs = 0.0;
    for (double a : in)
      for (double b : ood) pairs += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    const double brute = pairs / (static_cast<double>(n) * static_cast<double>(m));
    mismatches += auroc(in, ood) != brute;
  }
  return {mismatches == 0, std::to_string(1000 - mismatches) + "/1000 random score sets match pair counting exactly"};
}

}  // namespace cflow::acceptance
