#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cflow/errors.hpp"
#include "cflow/flow/model.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cflow;

namespace {

std::vector<std::size_t> to_vec(const IndexList& l) { return *l; }

FlowConfig flat(ImageShape shape, MaskKind mask, std::size_t layers, bool bn = false) {
  FlowConfig c;
  c.input = shape;
  c.scales = 0;
  c.coupling_layers = layers;
  c.mask = mask;
  c.stnet = StNetConfig{8, 1, 0};
  c.batchnorm = bn;
  return c;
}

// Row-vector map x -> full latent for Jacobian oracles.
std::function<Tensor(const Tensor&)> latent_map(const FlowModel& m) {
  return [&m](const Tensor& x) { return m.latent(x.reshaped({1, x.size()}), BnMode::kEval); };
}

// Pushes every batch-norm layer's running stats to random positive values.
void randomize_running_stats(FlowModel& m, Pcg32& rng) {
  for (auto& l : m.layers())
    if (auto* bn = std::get_if<BatchNormLayer>(&l))
      for (std::size_t d = 0; d < bn->dims(); ++d) {
        bn->running_mean()[d] = rng.uniform() - 0.5;
        bn->running_var()[d] = 0.5 + rng.uniform();
      }
}

}  // namespace

TEST_CASE("checkerboard 1x2x2 phase 0 changes (0,0) and (1,1)") {
  auto m = make_mask(MaskKind::kCheckerboard, {1, 2, 2}, 0);
  CHECK(to_vec(m.change_indices()) == std::vector<std::size_t>{0, 3});
  CHECK(to_vec(m.condition_indices()) == std::vector<std::size_t>{1, 2});
  CHECK(render_mask(m).find("change={(0,0),(1,1)}") != std::string::npos);
}

TEST_CASE("horizontal 1x4x4 phase 0 changes rows 2 and 3") {
  auto m = make_mask(MaskKind::kHorizontal, {1, 4, 4}, 0);
  std::vector<std::size_t> expected;
  for (std::size_t k = 8; k < 16; ++k) expected.push_back(k);
  CHECK(to_vec(m.change_indices()) == expected);
  auto odd = make_mask(MaskKind::kHorizontal, {1, 4, 4}, 1);
  CHECK(odd.change_count() == 8);
  CHECK(odd.change[0]);
}

TEST_CASE("cycle 1x4x4 phase 2 changes bottom-right conditioned on top-right") {
  auto m = make_mask(MaskKind::kCycle, {1, 4, 4}, 2);
  CHECK(to_vec(m.change_indices()) == std::vector<std::size_t>{10, 11, 14, 15});
  CHECK(to_vec(m.condition_indices()) == std::vector<std::size_t>{2, 3, 6, 7});
  auto first = make_mask(MaskKind::kCycle, {1, 4, 4}, 0);
  CHECK(to_vec(first.change_indices()) == std::vector<std::size_t>{0, 1, 4, 5});
  CHECK(to_vec(first.condition_indices()) == std::vector<std::size_t>{8, 9, 12, 13});  // bottom-left
}

TEST_CASE("channelwise uses the second half of channels on even phases") {
  auto m = make_mask(MaskKind::kChannelwise, {4, 2, 2}, 0);
  CHECK(to_vec(m.change_indices()) == std::vector<std::size_t>{8, 9, 10, 11, 12, 13, 14, 15});
  auto odd = make_mask(MaskKind::kChannelwise, {4, 2, 2}, 1);
  CHECK(odd.change[0]);
  CHECK(!odd.change[8]);
}

TEST_CASE("indivisible mask shapes are configuration errors") {
  CHECK_THROWS_AS(make_mask(MaskKind::kChannelwise, {3, 4, 4}, 0), ConfigError);
  CHECK_THROWS_AS(make_mask(MaskKind::kHorizontal, {1, 5, 4}, 0), ConfigError);
  CHECK_THROWS_AS(make_mask(MaskKind::kCycle, {1, 4, 3}, 0), ConfigError);
}

TEST_CASE("mask partitions are disjoint, non-trivial, and checkerboard repeats across channels") {
  Pcg32 rng(3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const ImageShape s{2 * (1 + rng.below(3)), 2 * (1 + rng.below(4)), 2 * (1 + rng.below(4))};
    const std::size_t phase = rng.below(9);
    for (auto kind : {MaskKind::kCheckerboard, MaskKind::kChannelwise, MaskKind::kHorizontal, MaskKind::kCycle}) {
      auto m = make_mask(kind, s, phase);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < s.volume(); ++i) {
        CHECK_FALSE((m.change[i] && m.condition[i]));
        if (kind != MaskKind::kCycle) CHECK(m.change[i] != m.condition[i]);
        changed += m.change[i];
      }
      CHECK(changed > 0);
      CHECK(changed < s.volume());
      if (kind == MaskKind::kCycle) CHECK(m.condition_count() == s.volume() / 4);
      if (kind == MaskKind::kCheckerboard)
        for (std::size_t c = 1; c < s.c; ++c)
          for (std::size_t i = 0; i < s.h; ++i)
            for (std::size_t j = 0; j < s.w; ++j) CHECK(m.change[s.index(c, i, j)] == m.change[s.index(0, i, j)]);
    }
  }
}

TEST_CASE("squeeze maps 1x4x4 to 4x2x2 and orders offsets (0,0),(0,1),(1,0),(1,1)") {
  CHECK(squeezed_shape({1, 4, 4}) == ImageShape{4, 2, 2});
  Tensor x({1, 4}, std::vector<double>{1, 2, 3, 4});  // [[a,b],[c,d]]
  Tensor y = squeeze(x, {1, 2, 2});
  CHECK(y == x);  // channels (a, b, c, d)
  Tensor big({1, 16});
  for (std::size_t k = 0; k < 16; ++k) big[k] = static_cast<double>(k);
  Tensor sq = squeeze(big, {1, 4, 4});
  CHECK(std::vector<double>(sq.data().begin(), sq.data().begin() + 4) == std::vector<double>{0, 2, 8, 10});
  CHECK(std::vector<double>(sq.data().begin() + 4, sq.data().begin() + 8) == std::vector<double>{1, 3, 9, 11});
  CHECK_THROWS_AS(squeezed_shape({1, 3, 4}), ConfigError);
}

TEST_CASE("unsqueeze inverts squeeze exactly") {
  Pcg32 rng(8, 1);
  const ImageShape s{3, 6, 4};
  Tensor x = testing::random_tensor({5, s.volume()}, rng, 10.0);
  CHECK(unsqueeze(squeeze(x, s), s) == x);
}

TEST_CASE("identity coupling leaves the input unchanged with zero logdet") {
  Tape t;
  Var x = t.constant(Tensor({1, 3}, std::vector<double>{0.5, -1.0, 2.0}));
  Var zero = t.constant(Tensor::matrix(1, 3));
  auto out = affine_coupling(t, x, zero, zero, Direction::kToLatent);
  CHECK(t.value(out.y) == t.value(x));
  CHECK(t.value(out.logdet)[0] == 0.0);
}

TEST_CASE("affine coupling with x=2, t=1, s=0.5 gives 3 e^0.5") {
  Tape t;
  auto out = affine_coupling(t, t.constant(Tensor::scalar(2.0)), t.constant(Tensor::scalar(0.5)),
                             t.constant(Tensor::scalar(1.0)), Direction::kToLatent);
  CHECK(t.value(out.y)[0] == doctest::Approx(4.946164).epsilon(1e-6));
  CHECK(t.value(out.logdet)[0] == 0.5);
  auto back = affine_coupling(t, out.y, t.constant(Tensor::scalar(0.5)), t.constant(Tensor::scalar(1.0)),
                              Direction::kToData);
  CHECK(t.value(back.y)[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(t.value(back.logdet)[0] == -0.5);
}

TEST_CASE("coupling logdet on a 4-dim input equals the finite-difference Jacobian log-determinant") {
  FlowModel m(flat({1, 2, 2}, MaskKind::kCheckerboard, 1));
  Pcg32 rng(17, 2);
  m.randomize(rng, 0.8);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = testing::random_tensor({1, 4}, rng, 2.0);
    const double analytic = m.log_det(x, BnMode::kEval)[0];
    const double brute = testing::log_abs_det(testing::numeric_jacobian(latent_map(m), x));
    CHECK(std::abs(analytic - brute) < 1e-6);
  }
}

TEST_CASE("coupling Jacobian is diagonal exp(s) on changed coordinates and identity elsewhere") {
  FlowModel m(flat({1, 4, 4}, MaskKind::kCheckerboard, 1));
  Pcg32 rng(23, 2);
  m.randomize(rng, 0.5);
  const auto& layer = std::get<CouplingLayer>(m.layers()[0]);
  Tensor x = testing::random_tensor({1, 16}, rng, 1.5);
  Tape tape;
  ParamBinder bind(tape, m.params());
  auto r = layer.apply(bind, tape.constant(x), Direction::kToLatent);
  const Tensor s = tape.value(r.s);
  auto j = testing::numeric_jacobian(latent_map(m), x);
  const auto& change = *layer.change_indices();
  for (std::size_t a = 0; a < change.size(); ++a)
    for (std::size_t b = 0; b < change.size(); ++b) {
      const double expected = a == b ? std::exp(s[a]) : 0.0;
      CHECK(std::abs(j(static_cast<Eigen::Index>(change[a]), static_cast<Eigen::Index>(change[b])) - expected) < 1e-7);
    }
  for (std::size_t k : *layer.condition_indices())
    for (std::size_t col = 0; col < 16; ++col)
      CHECK(std::abs(j(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(col)) - (k == col ? 1.0 : 0.0)) < 1e-9);
}

TEST_CASE("cycle layer reads only the previous quadrant and writes only its own") {
  for (std::size_t phase = 0; phase < 4; ++phase) {
    FlowConfig c = flat({1, 4, 4}, MaskKind::kCycle, phase + 1);
    FlowModel m(c);
    Pcg32 rng(31 + phase, 1);
    m.randomize(rng, 0.7);
    // Only the last layer (phase == `phase`) is probed: freeze earlier ones by
    // zeroing their output weights and scales.
    for (std::size_t k = 0; k + 1 < m.layers().size(); ++k) {
      const auto& l = std::get<CouplingLayer>(m.layers()[k]);
      for (auto id : l.net().parameter_ids()) m.params()[id].value.fill(0.0);
    }
    const auto& last = std::get<CouplingLayer>(m.layers().back());
    const Mask& mask = last.mask();
    Tensor x = testing::random_tensor({1, 16}, rng, 1.0);
    auto j = testing::numeric_jacobian(latent_map(m), x);
    for (std::size_t out = 0; out < 16; ++out)
      for (std::size_t in = 0; in < 16; ++in) {
        const double d = j(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        if (!mask.change[out]) {
          CHECK(std::abs(d - (in == out ? 1.0 : 0.0)) < 1e-9);
        } else if (!mask.change[in] && !mask.condition[in]) {
          CHECK(std::abs(d) < 1e-9);
        }
      }
    // The change quadrant does depend on the condition quadrant.
    double sensitivity = 0.0;
    for (std::size_t out = 0; out < 16; ++out)
      for (std::size_t in = 0; in < 16; ++in)
        if (mask.change[out] && mask.condition[in])
          sensitivity += std::abs(j(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)));
    CHECK(sensitivity > 1e-3);
  }
}

TEST_CASE("batchnorm with unit running stats and eps 0 in eval mode is the identity") {
  ParameterSet ps;
  BatchNormLayer bn(0, 3, ps, 0.1, 0.0);
  Tape t;
  ParamBinder bind(t, ps);
  Tensor x({2, 3}, std::vector<double>{1, 2, 3, -4, 5, -6});
  auto r = bn.apply(bind, t.constant(x), Direction::kToLatent, BnMode::kEval);
  CHECK(t.value(r.y) == x);
  CHECK(t.value(r.logdet)[0] == 0.0);
}

TEST_CASE("batchnorm train and eval modes differ when stats differ") {
  ParameterSet ps;
  BatchNormLayer bn(0, 2, ps);
  Tape t;
  ParamBinder bind(t, ps);
  Var x = t.constant(Tensor({3, 2}, std::vector<double>{4, 1, 6, 2, 8, 9}));
  auto train = bn.apply(bind, x, Direction::kToLatent, BnMode::kTrain);
  auto eval = bn.apply(bind, x, Direction::kToLatent, BnMode::kEval);
  CHECK(max_abs_diff(t.value(train.y), t.value(eval.y)) > 0.1);
  CHECK(train.stats.mean[0] == doctest::Approx(6.0));
  CHECK(train.stats.variance[0] == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("batchnorm train mode rejects a batch of one") {
  ParameterSet ps;
  BatchNormLayer bn(0, 2, ps);
  Tape t;
  ParamBinder bind(t, ps);
  CHECK_THROWS_AS(bn.apply(bind, t.constant(Tensor::matrix(1, 2)), Direction::kToLatent, BnMode::kTrain),
                  ContractViolation);
}

TEST_CASE("batchnorm eval logdet on 3 dims matches the finite-difference Jacobian") {
  ParameterSet ps;
  BatchNormLayer bn(0, 3, ps);
  Pcg32 rng(4, 4);
  ps[bn.log_gamma()].value = testing::random_tensor({1, 3}, rng, 1.0);
  ps[bn.beta()].value = testing::random_tensor({1, 3}, rng, 1.0);
  for (std::size_t d = 0; d < 3; ++d) {
    bn.running_mean()[d] = rng.uniform();
    bn.running_var()[d] = 0.2 + rng.uniform();
  }
  auto f = [&](const Tensor& x) {
    Tape t;
    ParamBinder bind(t, ps);
    return t.value(bn.apply(bind, t.constant(x.reshaped({1, 3})), Direction::kToLatent, BnMode::kEval).y);
  };
  Tensor x = testing::random_tensor({1, 3}, rng, 2.0);
  Tape t;
  ParamBinder bind(t, ps);
  const double analytic = t.value(bn.apply(bind, t.constant(x), Direction::kToLatent, BnMode::kEval).logdet)[0];
  CHECK(std::abs(analytic - testing::log_abs_det(testing::numeric_jacobian(f, x))) < 1e-6);
}

TEST_CASE("running stats move by momentum toward the batch") {
  ParameterSet ps;
  BatchNormLayer bn(0, 1, ps, 0.1, 1e-5);
  bn.update_running(BatchStats{Tensor::scalar(2.0), Tensor::scalar(3.0)});
  CHECK(bn.running_mean()[0] == doctest::Approx(0.2));
  CHECK(bn.running_var()[0] == doctest::Approx(0.9 + 0.3));
}

TEST_CASE("two scales with 3+3 layers build 12 couplings, 2 squeezes and 1 factor-out") {
  FlowConfig c;
  c.input = {1, 8, 8};
  c.scales = 2;
  c.coupling_layers = 3;
  FlowModel m(c);
  CHECK(m.coupling_count() == 12);
  CHECK(m.squeeze_count() == 2);
  CHECK(m.factor_out_count() == 1);
  auto sizes = m.latent_block_sizes();
  CHECK(sizes == std::vector<std::size_t>{32, 32});
  // Phases increase by one per coupling layer.
  std::size_t expected_phase = 0;
  for (const auto& l : m.layers())
    if (auto* cl = std::get_if<CouplingLayer>(&l)) CHECK(cl->mask().phase == expected_phase++);
}

TEST_CASE("latent bookkeeping covers every input coordinate exactly once") {
  for (std::size_t scales = 0; scales <= 3; ++scales) {
    FlowConfig c;
    c.input = {2, 16, 16};
    c.scales = scales;
    c.coupling_layers = 1;
    c.stnet = StNetConfig{4, 0, 0};
    FlowModel m(c);
    std::size_t total = 0;
    for (auto s : m.latent_block_sizes()) total += s;
    CHECK(total == c.input.volume());
    auto map = m.latent_to_input();
    std::sort(map.begin(), map.end());
    for (std::size_t k = 0; k < map.size(); ++k) CHECK(map[k] == k);
  }
}

TEST_CASE("an infeasible schedule names the failing layer") {
  FlowConfig c;
  c.input = {1, 6, 6};
  c.scales = 2;
  c.coupling_layers = 1;
  c.batchnorm = false;
  try {
    FlowModel m(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("layer") != std::string::npos);
    CHECK(msg.find("3x3") != std::string::npos);
  }
}

TEST_CASE("bottleneck at least as wide as the hidden layer is rejected") {
  FlowConfig c = flat({1, 4, 4}, MaskKind::kCheckerboard, 2);
  c.stnet = StNetConfig{8, 2, 8};
  CHECK_THROWS_AS(FlowModel{c}, ConfigError);
}

TEST_CASE("a freshly built model is the identity map") {
  FlowConfig c;
  c.input = {1, 8, 8};
  c.bn_eps = 0.0;  // otherwise batch norm rescales by 1/sqrt(1 + eps)
  FlowModel m(c);
  Pcg32 rng(2, 2);
  Tensor x = testing::random_tensor({4, 64}, rng, 2.0);
  Tensor z = m.latent(x, BnMode::kEval);
  // Same values, permuted into latent layout.
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t k = 0; k < 64; ++k)
      CHECK(std::abs(z.at(r, k) - x.at(r, m.latent_to_input()[k])) < 1e-12);
  CHECK(max_abs_diff(m.to_data(z), x) < 1e-12);
  auto lp = m.log_prob(x, BnMode::kEval);
  auto base = standard_normal_logprob(x);
  for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(lp[r] - base[r]) < 1e-9);
}

TEST_CASE("identity flow on two dims scores the origin at -log(2 pi)") {
  FlowModel m(flat({1, 1, 2}, MaskKind::kCheckerboard, 2));
  auto lp = m.log_prob(Tensor::matrix(1, 2), BnMode::kEval);
  CHECK(lp[0] == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-12));
  CHECK(lp[0] == doctest::Approx(-1.837877).epsilon(1e-6));
}

TEST_CASE("log-probability is base log-probability of the latent plus summed logdets") {
  FlowConfig c;
  c.input = {1, 4, 4};
  c.stnet = StNetConfig{6, 1, 0};
  FlowModel m(c);
  Pcg32 rng(41, 1);
  m.randomize(rng, 0.3);
  randomize_running_stats(m, rng);
  Tensor x = testing::random_tensor({3, 16}, rng, 1.0);
  auto lp = m.log_prob(x, BnMode::kEval);
  auto base = standard_normal_logprob(m.latent(x, BnMode::kEval));
  auto ld = m.log_det(x, BnMode::kEval);
  for (std::size_t r = 0; r < 3; ++r) CHECK(lp[r] == doctest::Approx(base[r] + ld[r]).epsilon(1e-12));
}

TEST_CASE("round trip is exact to 1e-8 for every mask kind and a two-scale flow") {
  std::vector<FlowConfig> configs;
  configs.push_back(flat({1, 8, 8}, MaskKind::kCheckerboard, 4, true));
  configs.push_back(flat({2, 4, 4}, MaskKind::kChannelwise, 4, true));
  configs.push_back(flat({1, 8, 8}, MaskKind::kHorizontal, 4, true));
  configs.push_back(flat({1, 8, 8}, MaskKind::kCycle, 8, true));
  FlowConfig ms;
  ms.input = {1, 8, 8};
  ms.stnet = StNetConfig{8, 2, 3};
  configs.push_back(ms);
  for (const auto& c : configs) {
    FlowModel m(c);
    Pcg32 rng(5, 9);
    m.randomize(rng, 0.4);
    randomize_running_stats(m, rng);
    Tensor x = testing::random_tensor({20, c.input.volume()}, rng, 3.0);
    Tensor z = m.latent(x, BnMode::kEval);
    CHECK(max_abs_diff(m.to_data(z), x) < 1e-8);
    CHECK(max_abs_diff(m.latent(m.to_data(z), BnMode::kEval), z) < 1e-8);
  }
}

TEST_CASE("per-layer logdets are exactly antisymmetric") {
  FlowConfig c = flat({1, 4, 4}, MaskKind::kCheckerboard, 3, true);
  FlowModel m(c);
  Pcg32 rng(12, 12);
  m.randomize(rng, 0.5);
  randomize_running_stats(m, rng);
  Tensor x = testing::random_tensor({4, 16}, rng, 1.0);
  Tape t;
  ParamBinder bind(t, m.params());
  Var h = t.constant(x);
  for (const auto& layer : m.layers()) {
    if (const auto* cl = std::get_if<CouplingLayer>(&layer)) {
      auto fwd = cl->apply(bind, h, Direction::kToLatent);
      auto back = cl->apply(bind, fwd.y, Direction::kToData);
      for (std::size_t r = 0; r < 4; ++r) CHECK(t.value(back.logdet)[r] == -t.value(fwd.logdet)[r]);
      h = fwd.y;
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
      auto fwd = bn->apply(bind, h, Direction::kToLatent, BnMode::kEval);
      auto back = bn->apply(bind, fwd.y, Direction::kToData, BnMode::kEval);
      CHECK(t.value(back.logdet)[0] == -t.value(fwd.logdet)[0]);
      h = fwd.y;
    }
  }
}

TEST_CASE("composed logdet matches the finite-difference Jacobian for inputs up to 16 dims") {
  FlowConfig ms;
  ms.input = {1, 4, 4};
  ms.coupling_layers = 2;
  ms.stnet = StNetConfig{6, 1, 0};
  for (const auto& c : {ms, flat({1, 4, 4}, MaskKind::kCycle, 4, true), flat({1, 2, 4}, MaskKind::kHorizontal, 3, true)}) {
    FlowModel m(c);
    Pcg32 rng(99, 1);
    m.randomize(rng, 0.4);
    randomize_running_stats(m, rng);
    Tensor x = testing::random_tensor({1, c.input.volume()}, rng, 1.0);
    const double analytic = m.log_det(x, BnMode::kEval)[0];
    const double brute = testing::log_abs_det(testing::numeric_jacobian(latent_map(m), x));
    CHECK(std::abs(analytic - brute) <= 1e-4 * std::max(1.0, std::abs(brute)));
  }
}

TEST_CASE("non-finite coupling output is a numeric error naming the layer") {
  FlowModel m(flat({1, 2, 2}, MaskKind::kCheckerboard, 2));
  Pcg32 rng(1, 1);
  m.randomize(rng, 0.5);
  const auto& first = std::get<CouplingLayer>(m.layers()[0]);
  m.params()[first.log_scale()].value.fill(1000.0);
  Tensor x = Tensor::matrix(1, 4, 1.0);
  try {
    m.log_prob(x, BnMode::kEval);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
}

TEST_CASE("identity-flow samples have per-coordinate means within 3/sqrt(n) of zero") {
  FlowModel m(flat({1, 1, 4}, MaskKind::kCheckerboard, 2));
  const std::size_t n = 10000;
  Tensor x = flow_sample(m, n, 7);
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += x.at(r, c);
    CHECK(std::abs(s / n) < 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("samples are deterministic and have finite log-probability") {
  FlowConfig c;
  c.input = {1, 4, 4};
  c.stnet = StNetConfig{6, 1, 0};
  FlowModel m(c);
  Pcg32 rng(3, 3);
  m.randomize(rng, 0.3);
  Tensor a = flow_sample(m, 50, 11);
  CHECK(a == flow_sample(m, 50, 11));
  CHECK_FALSE(a == flow_sample(m, 50, 12));
  for (double v : m.log_prob(a, BnMode::kEval)) CHECK(std::isfinite(v));
}
