#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cflow/numerics/tensor.hpp"

namespace cflow {

using ParamId = std::size_t;

/// A trainable tensor plus its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Owns every Parameter of a model. Ids are stable indices in declaration
/// order, which is also the serialization order.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor value);

  Parameter& operator[](ParamId id) { return params_.at(id); }
  const Parameter& operator[](ParamId id) const { return params_.at(id); }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

}  // namespace cflow
