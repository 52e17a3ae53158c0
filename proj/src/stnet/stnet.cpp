#include "cflow/stnet/stnet.hpp"

#include <cmath>
#include <numeric>

#include "cflow/errors.hpp"

namespace cflow {

StNet::StNet(std::string name, std::size_t input_arity, std::size_t change_arity, const StNetConfig& config,
             ParameterSet& params, Pcg32& init_rng)
    : input_arity_(input_arity), change_arity_(change_arity), config_(config) {
  if (input_arity == 0 || change_arity == 0) throw ConfigError(name + ": st-network arities must be positive");
  if (config.hidden == 0) throw ConfigError(name + ": hidden width must be positive");
  if (config.bottleneck != 0 && config.bottleneck >= config.hidden)
    throw ConfigError(name + ": bottleneck " + std::to_string(config.bottleneck) + " must be below hidden width " +
                      std::to_string(config.hidden));

  input_ = make_dense(name + ".in", input_arity, config.hidden, params, init_rng, false);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string prefix = name + ".block" + std::to_string(b);
    block_first_.push_back(make_dense(prefix + ".a", config.hidden, config.hidden, params, init_rng, false));
    block_second_.push_back(make_dense(prefix + ".b", config.hidden, config.hidden, params, init_rng, false));
  }
  if (config.bottleneck != 0) {
    down_ = make_dense(name + ".down", config.hidden, config.bottleneck, params, init_rng, false);
    up_ = make_dense(name + ".up", config.bottleneck, config.hidden, params, init_rng, false);
  }
  output_ = make_dense(name + ".out", config.hidden, 2 * change_arity, params, init_rng, true);

  std::vector<std::size_t> s(change_arity), t(change_arity);
  std::iota(s.begin(), s.end(), 0);
  std::iota(t.begin(), t.end(), change_arity);
  s_cols_ = std::make_shared<const std::vector<std::size_t>>(std::move(s));
  t_cols_ = std::make_shared<const std::vector<std::size_t>>(std::move(t));
}

StNet::Dense StNet::make_dense(const std::string& name, std::size_t in, std::size_t out, ParameterSet& params,
                               Pcg32& rng, bool zero) {
  Tensor w = Tensor::matrix(in, out);
  if (!zero) {
    // Glorot uniform.
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : w.data()) v = a * (2.0 * rng.uniform() - 1.0);
  }
  Dense d;
  d.weight = params.add(name + ".w", std::move(w));
  d.bias = params.add(name + ".b", Tensor::matrix(1, out));
  all_.push_back(d.weight);
  all_.push_back(d.bias);
  return d;
}

Var StNet::dense(const ParamBinder& bind, const Dense& d, Var x) const {
  return bind.tape().affine(x, bind(d.weight), bind(d.bias));
}

StOutput StNet::apply(const ParamBinder& bind, Var condition) const {
  Tape& t = bind.tape();
  if (t.value(condition).cols() != input_arity_)
    throw ConfigError("st-network expects " + std::to_string(input_arity_) + " condition values, got " +
                      std::to_string(t.value(condition).cols()));
  Var h = dense(bind, input_, condition);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    if (config_.bottleneck != 0 && b == bottleneck_position()) h = dense(bind, up_, dense(bind, down_, h));
    Var branch = dense(bind, block_second_[b], t.tanh(dense(bind, block_first_[b], h)));
    h = t.add(h, branch);
  }
  if (config_.bottleneck != 0 && bottleneck_position() == config_.blocks)
    h = dense(bind, up_, dense(bind, down_, h));
  Var out = dense(bind, output_, t.tanh(h));
  return {t.gather(out, s_cols_), t.gather(out, t_cols_)};
}

}  // namespace cflow
