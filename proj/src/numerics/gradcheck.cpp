#include "cflow/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cflow/numerics/rng.hpp"

namespace cflow {

namespace {

Tensor uniform_tensor(std::size_t rows, std::size_t cols, Pcg32& rng, double lo, double hi) {
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Reduces an op's output to a scalar with fixed random weights so that every
// output element contributes a distinct gradient.
Var weighted_sum(Tape& t, Var v, const Tensor& weights) { return t.sum_all(t.mul(v, t.constant(weights))); }

}  // namespace

GradCheckResult check_gradients(std::string name, const Program& program, ParameterSet& params, const Tensor& input,
                                double tolerance, double h) {
  auto analytic = evaluate_and_grad(program, params, input);
  auto numeric = finite_difference_gradients(program, params, input, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    worst = std::max(worst, relative_error(analytic.gradients[i], numeric[i]));
  return GradCheckResult{std::move(name), worst, tolerance};
}

std::vector<GradCheckResult> primitive_gradient_checks(std::uint64_t seed) {
  Pcg32 rng(seed, 0x9c);
  std::vector<GradCheckResult> out;
  const std::size_t n = 3, f = 4;

  auto unary = [&](const std::string& name, double lo, double hi, auto op) {
    ParameterSet ps;
    auto a = ps.add("a", uniform_tensor(n, f, rng, lo, hi));
    auto weights = std::make_shared<Tensor>();
    auto wrng = std::make_shared<Pcg32>(rng.next_u32(), 0x77);
    Program p = [=](Tape& t, ParameterSet& s, Var) {
      Var r = op(t, t.param(s, a));
      if (weights->empty()) *weights = uniform_tensor(t.value(r).rows(), t.value(r).cols(), *wrng, -2, 2);
      return weighted_sum(t, r, *weights);
    };
    out.push_back(check_gradients(name, p, ps, Tensor::scalar(0.0)));
  };
  // Output weights are drawn once, on first evaluation, when the shape is known.
  auto binary = [&](const std::string& name, std::size_t br, std::size_t bc, auto op) {
    ParameterSet ps;
    auto a = ps.add("a", uniform_tensor(n, f, rng, -2, 2));
    auto b = ps.add("b", uniform_tensor(br, bc, rng, -2, 2));
    auto weights = std::make_shared<Tensor>();
    auto wrng = std::make_shared<Pcg32>(rng.next_u32(), 0x77);
    Program p = [=](Tape& t, ParameterSet& s, Var) {
      Var r = op(t, t.param(s, a), t.param(s, b));
      if (weights->empty()) *weights = uniform_tensor(t.value(r).rows(), t.value(r).cols(), *wrng, -2, 2);
      return weighted_sum(t, r, *weights);
    };
    out.push_back(check_gradients(name, p, ps, Tensor::scalar(0.0)));
  };

  binary("add", n, f, [](Tape& t, Var a, Var b) { return t.add(a, b); });
  binary("sub", n, f, [](Tape& t, Var a, Var b) { return t.sub(a, b); });
  binary("mul", n, f, [](Tape& t, Var a, Var b) { return t.mul(a, b); });
  binary("add_broadcast(row)", 1, f, [](Tape& t, Var a, Var b) { return t.add_broadcast(a, b); });
  binary("add_broadcast(col)", n, 1, [](Tape& t, Var a, Var b) { return t.add_broadcast(a, b); });
  binary("mul_broadcast(row)", 1, f, [](Tape& t, Var a, Var b) { return t.mul_broadcast(a, b); });
  binary("mul_broadcast(scalar)", 1, 1, [](Tape& t, Var a, Var b) { return t.mul_broadcast(a, b); });
  binary("matmul", f, 2, [](Tape& t, Var a, Var b) { return t.matmul(a, b); });
  binary("concat", n, 2, [](Tape& t, Var a, Var b) { return t.concat(a, b); });
  unary("scale", -2, 2, [](Tape& t, Var a) { return t.scale(a, -1.7); });
  unary("add_scalar", -2, 2, [](Tape& t, Var a) { return t.add_scalar(a, 0.3); });
  unary("tanh", -2, 2, [](Tape& t, Var a) { return t.tanh(a); });
  unary("relu", -2, 2, [](Tape& t, Var a) { return t.relu(a); });
  unary("exp", -2, 2, [](Tape& t, Var a) { return t.exp(a); });
  unary("log", 0.1, 2, [](Tape& t, Var a) { return t.log(a); });
  unary("square", -2, 2, [](Tape& t, Var a) { return t.square(a); });
  unary("sum_cols", -2, 2, [](Tape& t, Var a) { return t.sum_cols(a); });
  unary("sum_all", -2, 2, [](Tape& t, Var a) { return t.sum_all(a); });
  unary("mean_rows", -2, 2, [](Tape& t, Var a) { return t.mean_rows(a); });
  unary("mean_all", -2, 2, [](Tape& t, Var a) { return t.mean_all(a); });
  auto cols = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{3, 0, 2});
  unary("gather", -2, 2, [cols](Tape& t, Var a) { return t.gather(a, cols); });
  binary("scatter", n, 3, [cols](Tape& t, Var a, Var b) { return t.scatter(a, cols, b); });

  {
    ParameterSet ps;
    auto x = ps.add("x", uniform_tensor(n, f, rng, -2, 2));
    auto w = ps.add("w", uniform_tensor(f, 2, rng, -2, 2));
    auto b = ps.add("b", uniform_tensor(1, 2, rng, -2, 2));
    const Tensor r = uniform_tensor(n, 2, rng, -2, 2);
    Program p = [=](Tape& t, ParameterSet& s, Var) {
      return weighted_sum(t, t.affine(t.param(s, x), t.param(s, w), t.param(s, b)), r);
    };
    out.push_back(check_gradients("affine", p, ps, Tensor::scalar(0.0)));
  }
  return out;
}

}  // namespace cflow
