#include "cflow/training/gradient_suite.hpp"

#include <cmath>

#include "cflow/errors.hpp"
#include "cflow/training/objectives.hpp"

namespace cflow {

namespace {

void randomize_running_stats(FlowModel& m, Pcg32& rng) {
  for (auto& l : m.layers())
    if (auto* bn = std::get_if<BatchNormLayer>(&l))
      for (std::size_t d = 0; d < bn->dims(); ++d) {
        bn->running_mean()[d] = rng.uniform() - 0.5;
        bn->running_var()[d] = 0.5 + rng.uniform();
      }
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, Pcg32& rng, double scale) {
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

GradCheckResult full_step(const std::string& name, const FlowConfig& config, std::size_t batch, Pcg32& rng) {
  FlowModel m(config);
  m.randomize(rng, 0.4);
  Dequantized in{normal_tensor(batch, m.dims(), rng, 1.0), Tensor::matrix(batch, 1)};
  Program program = [&m, &in](Tape& t, ParameterSet& params, Var) {
    ParamBinder bind(t, params, true);
    return t.scale(mle_objective(bind, m, in, BnMode::kTrain).objective, -1.0);
  };
  return check_gradients(name, program, m.params(), Tensor::scalar(0.0), 1e-3, 1e-5);
}

}  // namespace

std::vector<GradCheckResult> training_gradient_checks(std::uint64_t seed) {
  Pcg32 rng(seed, 0x9c4e);
  std::vector<GradCheckResult> out;

  FlowConfig image;
  image.input = {1, 4, 4};
  image.scales = 2;
  image.coupling_layers = 1;
  image.stnet = StNetConfig{6, 1, 0};
  out.push_back(full_step("full step (two-scale image flow)", image, 4, rng));

  FlowConfig flat;
  flat.input = {1, 1, 8};
  flat.scales = 0;
  flat.coupling_layers = 2;
  flat.stnet = StNetConfig{8, 1, 3};
  out.push_back(full_step("full step (vector flow, bottleneck 3)", flat, 4, rng));

  // Contrastive: the OOD indicator is piecewise constant, so OOD rows are
  // pushed well away from the floor before differencing.
  FlowConfig vec;
  vec.input = {1, 1, 4};
  vec.scales = 0;
  vec.coupling_layers = 2;
  vec.stnet = StNetConfig{8, 1, 0};
  FlowModel m(vec);
  m.randomize(rng, 0.4);
  randomize_running_stats(m, rng);
  Dequantized in{normal_tensor(6, 4, rng, 0.5), Tensor::matrix(6, 1)};
  Tensor ood_x = normal_tensor(4, 4, rng, 0.3);
  for (std::size_t c = 0; c < 4; ++c) ood_x.at(3, c) = 6.0;
  Dequantized ood{ood_x, Tensor::matrix(4, 1)};
  const auto ood_ll = batch_log_likelihood(m, ood, BnMode::kEval);
  double c = 0.0;
  {
    double lo = ood_ll[3], hi = ood_ll[0];
    for (std::size_t i = 0; i < 3; ++i) hi = std::min(hi, ood_ll[i]);
    if (!(lo + 2.0 < hi)) throw ContractViolation("contrastive gradient check: OOD rows are not separated");
    c = 0.5 * (lo + hi);
  }
  Program program = [&m, &ood, c](Tape& t, ParameterSet& params, Var x) {
    ParamBinder bind(t, params, true);
    Dequantized batch{t.value(x), Tensor::matrix(t.value(x).rows(), 1)};
    return contrastive_objective(bind, m, batch, BnMode::kTrain, ood, c).objective;
  };
  out.push_back(check_gradients("contrastive objective", program, m.params(), in.values, 1e-4, 1e-5));
  return out;
}

std::vector<GradCheckResult> all_gradient_checks(std::uint64_t seed) {
  auto out = primitive_gradient_checks(seed);
  auto more = training_gradient_checks(seed);
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

}  // namespace cflow
