#pragma once

#include "cflow/numerics/parameter.hpp"
#include "cflow/numerics/tape.hpp"

namespace cflow {

/// Puts parameters on a tape either as trainable leaves (gradients flow back
/// into the ParameterSet) or as plain constants for read-only evaluation.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterSet& params) : tape_(tape), values_(params) {}
  ParamBinder(Tape& tape, ParameterSet& params, bool trainable)
      : tape_(tape), values_(params), trainable_(trainable ? &params : nullptr) {}

  Var operator()(ParamId id) const {
    return trainable_ ? tape_.param(*trainable_, id) : tape_.constant(values_[id].value);
  }

  Tape& tape() const { return tape_; }
  const ParameterSet& params() const { return values_; }
  bool trainable() const { return trainable_ != nullptr; }

 private:
  Tape& tape_;
  const ParameterSet& values_;
  ParameterSet* trainable_ = nullptr;
};

}  // namespace cflow
