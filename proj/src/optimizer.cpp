#include "featsharp/optimizer.hpp"

#include <cmath>

namespace featsharp {

void NAdam::step(ParameterStore& store) {
  auto& params = store.all();
  if (m_.size() < params.size()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc1_next = 1.0 - std::pow(beta1_, static_cast<double>(t_ + 1));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Var& var = params[i].var;
    if (!var.node_ || var.node_->grad.empty()) continue;
    const Grid& g = var.node_->grad;
    Grid& val = var.node_->value;
    if (m_[i].empty()) {
      m_[i] = Grid(val.height(), val.width(), val.channels());
      v_[i] = Grid(val.height(), val.width(), val.channels());
    }
    Real* pm = m_[i].data();
    Real* pv = v_[i].data();
    Real* pval = val.data();
    const Real* pg = g.data();
    for (size_t k = 0; k < val.size(); ++k) {
      pm[k] = beta1_ * pm[k] + (1.0 - beta1_) * pg[k];
      pv[k] = beta2_ * pv[k] + (1.0 - beta2_) * pg[k] * pg[k];
      double m_hat = beta1_ * pm[k] / bc1_next + (1.0 - beta1_) * pg[k] / bc1;
      double v_hat = pv[k] / bc2;
      pval[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

}  // namespace featsharp
