#include "featsharp/params.hpp"

#include <stdexcept>

namespace featsharp {

Var ParameterStore::create(const std::string& name, Grid init) {
  if (has(name)) {
    throw std::invalid_argument("duplicate parameter: " + name);
  }
  Parameter p;
  p.name = name;
  p.var = Var::leaf(std::move(init));
  params_.push_back(p);
  return params_.back().var;
}

Var ParameterStore::find(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return p.var;
  }
  return Var();
}

void ParameterStore::zero_grads() {
  for (Parameter& p : params_) p.var.zero_grad();
}

}  // namespace featsharp
