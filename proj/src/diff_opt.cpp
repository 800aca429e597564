#include "mirig/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace mirig::diff {

void Optimizer::step(ParamSet& params) {
  // Validate before touching any state so a rejected step leaves params,
  // moments and the step counter untouched.
  for (const auto& e : params.entries)
    for (const float g : e.grad.data)
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient for parameter " + e.name +
                                 "; step rejected");

  if (m_.empty()) {
    for (const auto& e : params.entries) m_.emplace_back(e.value.shape);
    if (cfg_.algo == OptConfig::Algo::adam)
      for (const auto& e : params.entries) v_.emplace_back(e.value.shape);
  }
  if (m_.size() != params.entries.size())
    throw std::invalid_argument("optimizer bound to a different parameter set");

  ++t_;
  if (cfg_.algo == OptConfig::Algo::sgd) {
    for (size_t p = 0; p < params.entries.size(); ++p) {
      auto& e = params.entries[p];
      auto& m = m_[p];
      for (int64_t i = 0; i < e.value.numel(); ++i) {
        double vel = cfg_.momentum * double(m[i]) + double(e.grad[i]);
        m[i] = float(vel);
        e.value[i] = float(double(e.value[i]) - cfg_.lr * vel);
      }
    }
    return;
  }

  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (size_t p = 0; p < params.entries.size(); ++p) {
    auto& e = params.entries[p];
    auto& m = m_[p];
    auto& v = v_[p];
    for (int64_t i = 0; i < e.value.numel(); ++i) {
      double g = double(e.grad[i]);
      double mi = cfg_.beta1 * double(m[i]) + (1.0 - cfg_.beta1) * g;
      double vi = cfg_.beta2 * double(v[i]) + (1.0 - cfg_.beta2) * g * g;
      m[i] = float(mi);
      v[i] = float(vi);
      double update = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
      e.value[i] = float(double(e.value[i]) - update);
    }
  }
}

}  // namespace mirig::diff
