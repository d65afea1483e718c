#pragma once

#include <string>
#include <vector>

#include "featsharp/autodiff.hpp"

namespace featsharp {

/// A named learnable leaf. Gradient shape always equals the value shape;
/// gradients accumulate across backward passes until zero_grads().
struct Parameter {
  std::string name;
  Var var;
};

/// Ordered registry of every learnable tensor of a model. Registration order
/// is the checkpoint and optimizer-state order, so it must be deterministic.
class ParameterStore {
 public:
  Var create(const std::string& name, Grid init);
  Var find(const std::string& name) const;  // undefined Var if absent
  bool has(const std::string& name) const { return find(name).defined(); }

  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }
  size_t count() const { return params_.size(); }

  void zero_grads();

 private:
  std::vector<Parameter> params_;
};

}  // namespace featsharp
