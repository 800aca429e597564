#pragma once
#include <string>
#include <vector>

#include "mirig/cdp.hpp"
#include "mirig/optimizer.hpp"
#include "mirig/pairing.hpp"
#include "mirig/trainer.hpp"

namespace mirig::estimate {

struct EstimationConfig {
  int k_est = 256;           // pairs per estimation batch; independent of K_Tr
  pairing::Strategy strategy = pairing::Strategy::same_class(cdp::TaskSpec::all());
  int steps = 600;           // critic training steps
  int eval_batches = 16;     // held-out batches averaged into the estimate
  double tau = 0.1;
  diff::OptConfig opt = {};  // adam, lr 1e-3
  uint64_t seed = 2;
  double epsilon = 0.15;     // pinning tolerance
  int critic_hidden = 0, critic_out = 0;  // 0 -> mirror the checkpoint head dims
  int aug_pool_pairs = 4096;       // augmented pairing: train-side view pool
  int aug_eval_pool_pairs = 1024;  // held-out view pool

  std::string canonical() const;
  uint64_t hash() const;
};

enum class TheoremStatus { pinned, lower_bound_only, estimator_violation };
const char* status_name(TheoremStatus s);

struct MiEstimate {
  double bits = 0.0, std_bits = 0.0;
  int k_est = 0;
  double bound_bits = 0.0;
  std::string pairing_desc;
  TheoremStatus status = TheoremStatus::lower_bound_only;
  double entropy_bits = 0.0;  // H(C) for same-class pairing; NaN otherwise
  double epsilon = 0.0;
  std::vector<double> train_curve_bits;
  bool overfit_flag = false;  // held-out estimate escaped the training envelope
};

// Pinned       : |estimate - H(C)| <= eps  (estimate certifies I = H(C))
// LowerBoundOnly: estimate < H(C) - eps    (only the generic lower bound holds)
// EstimatorViolation: estimate > H(C) + eps (numerical or statistical fault)
TheoremStatus theorem1_status(double estimate_bits, double entropy_bits, double eps);

struct BoundCheck {
  bool pass = false;
  double margin_bits = 0.0;  // bound - estimate
};
BoundCheck check_bound(const MiEstimate& est);

// Post-training estimation with a frozen encoder and a freshly initialized
// critic.  repr_cache, if given, must be encode_dataset(ckpt, data).
MiEstimate estimate_mi(const train::Checkpoint& ckpt, const EstimationConfig& cfg,
                       const cdp::Dataset& data, const Tensor* repr_cache = nullptr);

// Same estimator on a known discrete joint with a free-table critic; used to
// validate the machinery against exact_mi_discrete.
struct TabularConfig {
  int k = 512;
  int steps = 400;
  int eval_batches = 16;
  uint64_t seed = 4;
  double lr = 0.05;
};
MiEstimate estimate_mi_tabular(const std::vector<std::vector<double>>& joint,
                               const TabularConfig& cfg);

}  // namespace mirig::estimate
