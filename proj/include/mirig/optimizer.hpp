#pragma once
#include <vector>

#include "mirig/graph.hpp"

namespace mirig::diff {

struct OptConfig {
  enum class Algo { sgd, adam };
  Algo algo = Algo::adam;
  double lr = 1e-3;
  double momentum = 0.0;   // sgd only
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// In-place update from params.grad.  Per-element math is done in double and
// stored back to float so the two-step recurrence matches a hand-unrolled
// double reference to float rounding.  Throws on non-finite gradients, naming
// the offending parameter; the step is then rejected (no state mutated).
class Optimizer {
 public:
  explicit Optimizer(OptConfig cfg) : cfg_(cfg) {}
  void step(ParamSet& params);
  int64_t steps_done() const { return t_; }
  const OptConfig& config() const { return cfg_; }

 private:
  OptConfig cfg_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace mirig::diff
