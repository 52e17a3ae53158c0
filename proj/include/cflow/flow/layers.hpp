#pragma once

#include <cstddef>
#include <string>

#include "cflow/flow/mask.hpp"
#include "cflow/numerics/binder.hpp"
#include "cflow/stnet/stnet.hpp"

namespace cflow {

enum class Direction { kToLatent, kToData };
enum class BnMode { kTrain, kEval };

std::string_view bn_mode_name(BnMode mode);
BnMode parse_bn_mode(std::string_view name);

struct LayerOutput {
  Var y;
  Var logdet;  // N x 1 (or 1 x 1 when identical across the batch)
};

/// The affine coupling map on the changed coordinates.
///   to latent: y = (x + t) * exp(s),   logdet = sum(s)
///   to data:   y = x * exp(-s) - t,    logdet = -sum(s)
LayerOutput affine_coupling(Tape& tape, Var x_change, Var s, Var t, Direction dir);

/// Coupling layer with a bounded scale s = exp(log_scale) * tanh(raw_s).
class CouplingLayer {
 public:
  CouplingLayer(std::size_t index, Mask mask, const StNetConfig& net, ParameterSet& params, Pcg32& init_rng);

  struct Result {
    Var y;
    Var logdet;
    Var s;  // N x |change|
    Var t;
  };
  Result apply(const ParamBinder& bind, Var x, Direction dir) const;

  std::size_t index() const { return index_; }
  const Mask& mask() const { return mask_; }
  const StNet& net() const { return net_; }
  const IndexList& change_indices() const { return change_; }
  const IndexList& condition_indices() const { return condition_; }
  ParamId log_scale() const { return log_scale_; }

 private:
  std::size_t index_;
  Mask mask_;
  IndexList change_;
  IndexList condition_;
  StNet net_;
  ParamId log_scale_;
};

/// Batch statistics observed in train mode, fed back into the running stats.
struct BatchStats {
  Tensor mean;      // 1 x D
  Tensor variance;  // 1 x D, biased
};

/// Per-coordinate batch normalization as a bijector. gamma is stored as
/// log-gamma so it stays positive and log|gamma| is exact.
class BatchNormLayer {
 public:
  BatchNormLayer(std::size_t index, std::size_t dims, ParameterSet& params, double momentum = 0.1, double eps = 1e-5);

  struct Result {
    Var y;
    Var logdet;  // 1 x 1, shared by every example
    BatchStats stats;
  };
  /// Train mode requires at least two rows and is only defined to latent.
  Result apply(const ParamBinder& bind, Var x, Direction dir, BnMode mode) const;

  void update_running(const BatchStats& stats);

  std::size_t index() const { return index_; }
  std::size_t dims() const { return dims_; }
  double momentum() const { return momentum_; }
  double eps() const { return eps_; }
  ParamId log_gamma() const { return log_gamma_; }
  ParamId beta() const { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  std::size_t index_;
  std::size_t dims_;
  double momentum_;
  double eps_;
  ParamId log_gamma_;
  ParamId beta_;
  Tensor running_mean_;
  Tensor running_var_;
};

struct SqueezeLayer {
  std::size_t index = 0;
  ImageShape input;
  IndexList forward;  // gather indices, input -> squeezed
  IndexList inverse;
};

/// Sends the first half of the channels to the latent.
struct FactorOutLayer {
  std::size_t index = 0;
  ImageShape input;
  IndexList factored;  // columns leaving the flow
  IndexList kept;
};

}  // namespace cflow
