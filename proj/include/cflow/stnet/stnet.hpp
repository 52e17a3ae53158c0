#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "cflow/numerics/binder.hpp"
#include "cflow/numerics/rng.hpp"

namespace cflow {

struct StNetConfig {
  std::size_t hidden = 256;
  std::size_t blocks = 2;
  std::size_t bottleneck = 0;  // 0 = no bottleneck

  bool operator==(const StNetConfig&) const = default;
};

/// Raw network outputs; the coupling layer turns `s` into a bounded scale.
struct StOutput {
  Var s;
  Var t;
};

/// Dense residual s/t network:
///   h = W_in x + b_in
///   repeat B times: h = h + A2(tanh(A1(h)))      (bottleneck after block ceil(B/2))
///   out = W_out tanh(h) + b_out                  (W_out, b_out zero-initialized)
/// The optional bottleneck is a linear projection to `bottleneck` dims and a
/// linear projection back, with no skip around it.
class StNet {
 public:
  StNet() = default;
  StNet(std::string name, std::size_t input_arity, std::size_t change_arity, const StNetConfig& config,
        ParameterSet& params, Pcg32& init_rng);

  StOutput apply(const ParamBinder& bind, Var condition) const;

  std::size_t input_arity() const { return input_arity_; }
  std::size_t change_arity() const { return change_arity_; }
  const StNetConfig& config() const { return config_; }
  /// Number of residual blocks run before the bottleneck.
  std::size_t bottleneck_position() const { return (config_.blocks + 1) / 2; }
  const std::vector<ParamId>& parameter_ids() const { return all_; }

 private:
  struct Dense {
    ParamId weight = 0;
    ParamId bias = 0;
  };
  Dense make_dense(const std::string& name, std::size_t in, std::size_t out, ParameterSet& params, Pcg32& rng,
                   bool zero);
  Var dense(const ParamBinder& bind, const Dense& d, Var x) const;

  std::size_t input_arity_ = 0;
  std::size_t change_arity_ = 0;
  StNetConfig config_;
  Dense input_;
  std::vector<Dense> block_first_;
  std::vector<Dense> block_second_;
  Dense down_;
  Dense up_;
  Dense output_;
  std::vector<ParamId> all_;
  std::shared_ptr<const std::vector<std::size_t>> s_cols_;
  std::shared_ptr<const std::vector<std::size_t>> t_cols_;
};

}  // namespace cflow
