#include <doctest.h>

#include "cflow/errors.hpp"
#include "cflow/numerics/autodiff.hpp"
#include "cflow/stnet/stnet.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cflow;

namespace {

// Row-vector map condition -> [s, t].
std::function<Tensor(const Tensor&)> st_map(const StNet& net, const ParameterSet& ps) {
  return [&net, &ps](const Tensor& x) {
    Tape t;
    ParamBinder bind(t, ps);
    auto out = net.apply(bind, t.constant(x.reshaped({1, x.size()})));
    return t.value(t.concat(out.s, out.t));
  };
}

void randomize(ParameterSet& ps, Pcg32& rng, double scale) {
  for (auto& p : ps) p.value = testing::random_tensor(p.value.shape(), rng, scale);
}

}  // namespace

TEST_CASE("a fresh st-network outputs exactly zero") {
  ParameterSet ps;
  Pcg32 rng(1, 1);
  StNet net("st", 5, 3, StNetConfig{16, 2, 4}, ps, rng);
  Tape t;
  ParamBinder bind(t, ps);
  auto out = net.apply(bind, t.constant(testing::random_tensor({7, 5}, rng, 3.0)));
  CHECK(t.value(out.s) == Tensor::matrix(7, 3));
  CHECK(t.value(out.t) == Tensor::matrix(7, 3));
}

TEST_CASE("initialization is reproducible from the seed") {
  ParameterSet a, b;
  Pcg32 ra(9, 0x1f1a), rb(9, 0x1f1a);
  StNet na("st", 4, 2, StNetConfig{8, 1, 0}, a, ra);
  StNet nb("st", 4, 2, StNetConfig{8, 1, 0}, b, rb);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].value == b[k].value);
}

TEST_CASE("bottleneck sits after ceil(B/2) residual blocks") {
  ParameterSet ps;
  Pcg32 rng(1, 1);
  CHECK(StNet("a", 2, 2, StNetConfig{8, 1, 2}, ps, rng).bottleneck_position() == 1);
  CHECK(StNet("b", 2, 2, StNetConfig{8, 4, 2}, ps, rng).bottleneck_position() == 2);
  CHECK(StNet("c", 2, 2, StNetConfig{8, 5, 2}, ps, rng).bottleneck_position() == 3);
}

TEST_CASE("a width-l bottleneck caps the Jacobian rank at l") {
  for (std::size_t l : {1, 2, 3}) {
    ParameterSet ps;
    Pcg32 rng(40 + l, 1);
    StNet net("st", 10, 6, StNetConfig{16, 2, l}, ps, rng);
    randomize(ps, rng, 0.6);
    Tensor x = testing::random_tensor({1, 10}, rng, 1.0);
    auto sv = testing::singular_values(testing::numeric_jacobian(st_map(net, ps), x));
    const double tol = 1e-6 * sv(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv(i) > tol;
    CHECK(static_cast<std::size_t>(rank) <= l);
    CHECK(sv(0) > 1e-3);
  }
  // Without a bottleneck the same shape reaches full rank.
  ParameterSet ps;
  Pcg32 rng(40, 1);
  StNet net("st", 10, 6, StNetConfig{16, 2, 0}, ps, rng);
  randomize(ps, rng, 0.6);
  auto sv = testing::singular_values(testing::numeric_jacobian(st_map(net, ps), testing::random_tensor({1, 10}, rng, 1.0)));
  CHECK(sv(sv.size() - 1) > 1e-6 * sv(0));
}

TEST_CASE("st-network parameter gradients match finite differences") {
  ParameterSet ps;
  Pcg32 rng(5, 5);
  StNet net("st", 4, 3, StNetConfig{6, 2, 2}, ps, rng);
  randomize(ps, rng, 0.5);
  Tensor weights = testing::random_tensor({2, 6}, rng, 1.0);
  Program program = [&net, weights](Tape& t, ParameterSet& params, Var x) {
    ParamBinder bind(t, params, true);
    auto out = net.apply(bind, x);
    return t.sum_all(t.mul(t.concat(out.s, out.t), t.constant(weights)));
  };
  auto r = check_gradients("stnet", program, ps, testing::random_tensor({2, 4}, rng, 1.0), 1e-5, 1e-5);
  CHECK(r.passed());
}

TEST_CASE("arity mismatches are configuration errors") {
  ParameterSet ps;
  Pcg32 rng(1, 1);
  StNet net("st", 4, 2, StNetConfig{8, 1, 0}, ps, rng);
  Tape t;
  ParamBinder bind(t, ps);
  CHECK_THROWS_AS(net.apply(bind, t.constant(Tensor::matrix(1, 5))), ConfigError);
  CHECK_THROWS_AS(StNet("bad", 4, 2, StNetConfig{8, 1, 8}, ps, rng), ConfigError);
  CHECK_THROWS_AS(StNet("bad", 0, 2, StNetConfig{8, 1, 0}, ps, rng), ConfigError);
}
