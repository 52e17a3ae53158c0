#include "cflow/numerics/parameter.hpp"

namespace cflow {

ParamId ParameterSet::add(std::string name, Tensor value) {
  Tensor grad(value.shape(), 0.0);
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return params_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad = Tensor(p.value.shape(), 0.0);
}

}  // namespace cflow
