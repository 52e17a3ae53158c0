#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <deque>
#include <vector>

#include "cflow/numerics/parameter.hpp"
#include "cflow/numerics/tensor.hpp"

namespace cflow {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// The complete set of differentiable primitives. Every value on a tape is a
/// rank-2 tensor (rows = batch, cols = features).
enum class Op : std::uint8_t {
  kConstant,
  kParam,
  kAdd,
  kSub,
  kMul,
  kAddBroadcast,  // b is 1x1, 1xF or Nx1
  kMulBroadcast,
  kScale,
  kAddScalar,
  kMatmul,
  kAffine,  // x*W + b, b is 1xM
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kSumCols,   // NxF -> Nx1
  kSumAll,    // NxF -> 1x1
  kMeanRows,  // NxF -> 1xF
  kMeanAll,   // NxF -> 1x1
  kGather,    // select columns
  kScatter,   // replace columns of a base
  kConcat,    // join columns
};

const char* op_name(Op op);

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep is a valid topological order. One tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is tracked (read it back with grad()).
  Var variable(Tensor value);
  /// Leaf bound to `params[id]`; backward() accumulates into its grad.
  Var param(ParameterSet& params, ParamId id);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_broadcast(Var a, Var b);
  Var mul_broadcast(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var matmul(Var a, Var b);
  Var affine(Var x, Var w, Var b);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var sum_cols(Var a);
  Var sum_all(Var a);
  Var mean_rows(Var a);
  Var mean_all(Var a);
  Var gather(Var a, std::shared_ptr<const std::vector<std::size_t>> cols);
  Var scatter(Var base, std::shared_ptr<const std::vector<std::size_t>> cols, Var values);
  Var concat(Var a, Var b);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target w.r.t. `v`; zeros if unreached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Seeds d(out)/d(out) = 1 and sweeps the tape. `out` must be 1x1.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Labels attached to numeric errors raised while the scope is open.
  class Scope {
   public:
    Scope(Tape& tape, std::string label) : tape_(tape) { tape_.scopes_.push_back(std::move(label)); }
    ~Scope() { tape_.scopes_.pop_back(); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape& tape_;
  };
  std::string current_scope() const;

 private:
  struct Node {
    Op op = Op::kConstant;
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::size_t in[3] = {0, 0, 0};
    double scalar = 0.0;
    std::shared_ptr<const std::vector<std::size_t>> index;
    ParameterSet* params = nullptr;
    ParamId param = 0;
  };

  Var push(Op op, Tensor value, std::initializer_list<std::size_t> inputs);
  Tensor& grad_slot(std::size_t id);
  void backprop_node(std::size_t id);

  std::deque<Node> nodes_;  // deque keeps value() references valid across pushes
  std::vector<std::string> scopes_;
};

}  // namespace cflow
