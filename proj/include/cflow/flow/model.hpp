#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cflow/flow/layers.hpp"
#include "cflow/flow/squeeze.hpp"

namespace cflow {

/// Architecture of a coupling flow.
///
/// With `scales == 0` the flow is a flat stack of `coupling_layers` layers
/// using `mask`. With `scales >= 1` each scale is: `coupling_layers` layers
/// with `mask`, a squeeze, `coupling_layers` channel-wise layers, and (except
/// on the last scale) a factor-out of half the channels.
struct FlowConfig {
  ImageShape input{1, 16, 16};
  std::size_t scales = 2;
  std::size_t coupling_layers = 3;
  MaskKind mask = MaskKind::kCheckerboard;
  StNetConfig stnet;
  bool batchnorm = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  std::uint64_t init_seed = 0;

  bool operator==(const FlowConfig&) const = default;
};

using FlowLayer = std::variant<CouplingLayer, BatchNormLayer, SqueezeLayer, FactorOutLayer>;

std::string layer_description(const FlowLayer& layer);

/// Everything recorded while mapping a batch to the latent space.
struct LatentPass {
  std::vector<Var> factored;  // pieces in factor-out order
  Var final;                  // coordinates that survive every factor-out
  Var logdet;                 // N x 1, sum over all layers
  Var base_logprob;           // N x 1
  Var logprob;                // N x 1, base_logprob + logdet
  std::vector<BatchStats> batch_stats;  // one per batch-norm layer (train mode)

  struct CouplingRecord {
    std::size_t layer = 0;
    Var output;
    Var s;
    Var t;
    std::size_t factored_before = 0;  // pieces already factored out
  };
  std::vector<CouplingRecord> couplings;  // filled when requested
};

/// Ordered invertible layers with a standard-normal base distribution.
///
/// The full latent vector is laid out as the concatenation of the factored
/// pieces followed by the final active coordinates; `latent_to_input()` maps
/// each latent position back to its input coordinate (squeezes and
/// factor-outs only permute coordinates).
class FlowModel {
 public:
  explicit FlowModel(const FlowConfig& config);

  const FlowConfig& config() const { return config_; }
  const ImageShape& input_shape() const { return config_.input; }
  std::size_t dims() const { return config_.input.volume(); }
  const std::vector<FlowLayer>& layers() const { return layers_; }
  std::vector<FlowLayer>& layers() { return layers_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  std::size_t coupling_count() const;
  std::size_t squeeze_count() const;
  std::size_t factor_out_count() const;
  /// Latent sizes of each factored piece, then the final block.
  std::vector<std::size_t> latent_block_sizes() const;

  const std::vector<std::size_t>& latent_to_input() const { return latent_to_input_; }
  /// Input coordinate of each active column entering layer `layer`.
  const std::vector<std::size_t>& active_to_input(std::size_t layer) const { return active_to_input_.at(layer); }
  ImageShape shape_before(std::size_t layer) const { return shapes_.at(layer); }

  /// Data -> latent on a tape. `bind` decides whether parameters are trainable.
  LatentPass to_latent(const ParamBinder& bind, Var x, BnMode mode, bool record_couplings = false) const;

  /// Read-only conveniences (no gradients). Rows of `x` are examples.
  std::vector<double> log_prob(const Tensor& x, BnMode mode) const;
  /// Full latent in latent layout, N x D.
  Tensor latent(const Tensor& x, BnMode mode) const;
  /// Latent -> data with eval-mode batch norm.
  Tensor to_data(const Tensor& z) const;
  /// Sum of per-layer log-determinants (data -> latent), N x 1.
  Tensor log_det(const Tensor& x, BnMode mode) const;

  /// Moves every batch-norm layer's running stats toward `stats`.
  void update_running_stats(const std::vector<BatchStats>& stats);

  /// Overwrites every parameter with uniform noise in [-scale, scale]; test aid.
  void randomize(Pcg32& rng, double scale);

 private:
  FlowConfig config_;
  ParameterSet params_;
  std::vector<FlowLayer> layers_;
  std::vector<ImageShape> shapes_;  // shape entering each layer, plus final
  std::vector<std::vector<std::size_t>> active_to_input_;
  std::vector<std::size_t> latent_to_input_;
};

/// log N(z; 0, I) per row.
Tensor standard_normal_logprob(const Tensor& z);

/// z ~ N(0, I) pushed through the inverse flow.
Tensor flow_sample(const FlowModel& model, std::size_t n, std::uint64_t seed);

}  // namespace cflow
