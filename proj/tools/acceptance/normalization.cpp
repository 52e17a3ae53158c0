#include <cmath>
#include <sstream>

#include "cflow/training/trainer.hpp"
#include "criteria.hpp"

namespace cflow::acceptance {

// A 2-D flow fit to two well-separated Gaussian modes, then exp(log p)
// integrated over [-6, 6]^2 with the trapezoid rule.
Outcome normalization() {
  constexpr std::size_t kGrid = 400;
  constexpr double kLo = -6.0, kHi = 6.0, kTolerance = 0.02;

  Pcg32 rng(3, 0x2d);
  Tensor data = Tensor::matrix(2000, 2);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double cx = (i % 2 == 0) ? -2.0 : 2.0, cy = (i % 2 == 0) ? -1.0 : 1.0;
    data.at(i, 0) = cx + 0.6 * rng.normal();
    data.at(i, 1) = cy + 0.6 * rng.normal();
  }
  FlowConfig fc;
  fc.input = {1, 1, 2};
  fc.scales = 0;
  fc.coupling_layers = 6;
  fc.stnet = StNetConfig{32, 2, 0};
  fc.init_seed = 3;
  FlowModel model(fc);
  TrainConfig tc;
  tc.batch_size = 100;
  tc.epochs = 1000;
  tc.max_steps = 2000;
  tc.learning_rate = 3e-3;
  tc.seed = 3;
  const TrainResult result = train(model, tc, {data, false});

  const double h = (kHi - kLo) / static_cast<double>(kGrid - 1);
  Tensor grid = Tensor::matrix(kGrid * kGrid, 2);
  for (std::size_t i = 0; i < kGrid; ++i)
    for (std::size_t j = 0; j < kGrid; ++j) {
      grid.at(i * kGrid + j, 0) = kLo + h * static_cast<double>(i);
      grid.at(i * kGrid + j, 1) = kLo + h * static_cast<double>(j);
    }
  const auto logp = model.log_prob(grid, BnMode::kEval);
  double integral = 0.0;
  for (std::size_t i = 0; i < kGrid; ++i)
    for (std::size_t j = 0; j < kGrid; ++j) {
      const double wi = (i == 0 || i == kGrid - 1) ? 0.5 : 1.0;
      const double wj = (j == 0 || j == kGrid - 1) ? 0.5 : 1.0;
      integral += wi * wj * std::exp(logp[i * kGrid + j]);
    }
  integral *= h * h;

  std::ostringstream os;
  os << "integral " << integral << " over [-6,6]^2 (400x400 trapezoid), tolerance " << kTolerance
     << ", final train nll " << result.log.back().mean_nll;
  return {std::abs(integral - 1.0) <= kTolerance, os.str()};
}

}  // namespace cflow::acceptance
