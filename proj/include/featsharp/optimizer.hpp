#pragma once

#include <vector>

#include "featsharp/params.hpp"

namespace featsharp {

/// Nesterov-corrected adaptive-moment optimizer (NAdam, Dozat 2016 with
/// constant momentum factor).
class NAdam {
 public:
  NAdam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update from the gradients currently held by the store.
  /// Parameters with no accumulated gradient are left untouched.
  void step(ParameterStore& store);

  long long step_count() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Grid> m_, v_;  // first/second moments, by parameter index
};

}  // namespace featsharp
