#include "cflow/flow/layers.hpp"

#include <cmath>

#include "cflow/errors.hpp"

namespace cflow {

std::string_view bn_mode_name(BnMode mode) { return mode == BnMode::kTrain ? "train" : "eval"; }

BnMode parse_bn_mode(std::string_view name) {
  if (name == "train") return BnMode::kTrain;
  if (name == "eval") return BnMode::kEval;
  throw ConfigError("unknown batch-norm mode '" + std::string(name) + "' (expected train or eval)");
}

LayerOutput affine_coupling(Tape& tape, Var x_change, Var s, Var t, Direction dir) {
  if (dir == Direction::kToLatent) {
    Var y = tape.mul(tape.add(x_change, t), tape.exp(s));
    return {y, tape.sum_cols(s)};
  }
  Var y = tape.sub(tape.mul(x_change, tape.exp(tape.scale(s, -1.0))), t);
  return {y, tape.scale(tape.sum_cols(s), -1.0)};
}

CouplingLayer::CouplingLayer(std::size_t index, Mask mask, const StNetConfig& net, ParameterSet& params,
                             Pcg32& init_rng)
    : index_(index),
      mask_(std::move(mask)),
      change_(mask_.change_indices()),
      condition_(mask_.condition_indices()),
      net_("coupling" + std::to_string(index) + ".st", condition_->size(), change_->size(), net, params, init_rng),
      log_scale_(params.add("coupling" + std::to_string(index) + ".log_scale", Tensor::scalar(0.0))) {
  if (condition_->empty()) throw ConfigError("coupling layer " + std::to_string(index) + ": empty condition set");
}

CouplingLayer::Result CouplingLayer::apply(const ParamBinder& bind, Var x, Direction dir) const {
  Tape& t = bind.tape();
  Tape::Scope scope(t, "layer " + std::to_string(index_) + " (coupling, " + std::string(mask_kind_name(mask_.kind)) +
                           ")");
  if (t.value(x).cols() != mask_.shape.volume())
    throw ContractViolation("coupling layer " + std::to_string(index_) + " expects " +
                            std::to_string(mask_.shape.volume()) + " coordinates, got " +
                            std::to_string(t.value(x).cols()));
  Var x_change = t.gather(x, change_);
  Var x_cond = t.gather(x, condition_);
  StOutput raw = net_.apply(bind, x_cond);
  Var s = t.mul_broadcast(t.tanh(raw.s), t.exp(bind(log_scale_)));
  LayerOutput out = affine_coupling(t, x_change, s, raw.t, dir);
  return {t.scatter(x, change_, out.y), out.logdet, s, raw.t};
}

BatchNormLayer::BatchNormLayer(std::size_t index, std::size_t dims, ParameterSet& params, double momentum, double eps)
    : index_(index),
      dims_(dims),
      momentum_(momentum),
      eps_(eps),
      log_gamma_(params.add("batchnorm" + std::to_string(index) + ".log_gamma", Tensor::matrix(1, dims))),
      beta_(params.add("batchnorm" + std::to_string(index) + ".beta", Tensor::matrix(1, dims))),
      running_mean_(Tensor::matrix(1, dims, 0.0)),
      running_var_(Tensor::matrix(1, dims, 1.0)) {}

BatchNormLayer::Result BatchNormLayer::apply(const ParamBinder& bind, Var x, Direction dir, BnMode mode) const {
  Tape& t = bind.tape();
  Tape::Scope scope(t, "layer " + std::to_string(index_) + " (batchnorm, " + std::string(bn_mode_name(mode)) + ")");
  const Tensor& xv = t.value(x);
  if (xv.cols() != dims_)
    throw ContractViolation("batchnorm layer " + std::to_string(index_) + " expects " + std::to_string(dims_) +
                            " coordinates, got " + std::to_string(xv.cols()));
  Var log_gamma = bind(log_gamma_);
  Var beta = bind(beta_);

  if (mode == BnMode::kTrain) {
    if (dir != Direction::kToLatent)
      throw ContractViolation("batchnorm layer " + std::to_string(index_) + ": train mode is defined only to latent");
    if (xv.rows() < 2)
      throw ContractViolation("batchnorm layer " + std::to_string(index_) + ": train mode needs a batch of at least 2");
    Var mean = t.mean_rows(x);
    Var centered = t.add_broadcast(x, t.scale(mean, -1.0));
    Var var = t.mean_rows(t.square(centered));
    Var log_var = t.log(t.add_scalar(var, eps_));
    Var normalized = t.mul_broadcast(centered, t.exp(t.scale(log_var, -0.5)));
    Var y = t.add_broadcast(t.mul_broadcast(normalized, t.exp(log_gamma)), beta);
    Var logdet = t.sub(t.sum_all(log_gamma), t.scale(t.sum_all(log_var), 0.5));
    return {y, logdet, BatchStats{t.value(mean), t.value(var)}};
  }

  Tensor neg_mean = running_mean_;
  Tensor inv_std = running_var_;
  Tensor std_dev = running_var_;
  double half_log_var = 0.0;
  for (std::size_t d = 0; d < dims_; ++d) {
    neg_mean[d] = -running_mean_[d];
    inv_std[d] = 1.0 / std::sqrt(running_var_[d] + eps_);
    std_dev[d] = std::sqrt(running_var_[d] + eps_);
    half_log_var += 0.5 * std::log(running_var_[d] + eps_);
  }
  Var sum_log_gamma = t.sum_all(log_gamma);
  if (dir == Direction::kToLatent) {
    Var normalized = t.mul_broadcast(t.add_broadcast(x, t.constant(neg_mean)), t.constant(inv_std));
    Var y = t.add_broadcast(t.mul_broadcast(normalized, t.exp(log_gamma)), beta);
    return {y, t.add_scalar(sum_log_gamma, -half_log_var), {}};
  }
  Var unscaled = t.mul_broadcast(t.add_broadcast(x, t.scale(beta, -1.0)), t.exp(t.scale(log_gamma, -1.0)));
  Var y = t.add_broadcast(t.mul_broadcast(unscaled, t.constant(std_dev)), t.constant(running_mean_));
  return {y, t.scale(t.add_scalar(sum_log_gamma, -half_log_var), -1.0), {}};
}

void BatchNormLayer::update_running(const BatchStats& stats) {
  if (stats.mean.size() != dims_ || stats.variance.size() != dims_)
    throw ContractViolation("batchnorm layer " + std::to_string(index_) + ": batch stats have the wrong size");
  for (std::size_t d = 0; d < dims_; ++d) {
    running_mean_[d] = (1.0 - momentum_) * running_mean_[d] + momentum_ * stats.mean[d];
    running_var_[d] = (1.0 - momentum_) * running_var_[d] + momentum_ * stats.variance[d];
  }
}

}  // namespace cflow
