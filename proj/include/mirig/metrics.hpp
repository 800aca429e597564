#pragma once
#include <span>
#include <vector>

#include "mirig/cdp.hpp"
#include "mirig/tensor.hpp"
#include "mirig/trainer.hpp"

namespace mirig::metrics {

// Multinomial logistic probe on frozen features, fit by deterministic
// full-batch gradient descent with heavy-ball momentum.  The step size comes
// from a power-iteration bound on the logistic Hessian, so there is nothing to
// tune; the small ridge keeps the optimum finite on separable data.
struct ProbeConfig {
  int max_iters = 3000;
  double tol = 1e-5;      // stop when the gradient infinity-norm drops below
  double momentum = 0.9;
  double l2 = 1e-4;
  int max_train_rows = 0;  // 0 = use every training row
};

struct ProbeResult {
  double train_acc = 0.0, eval_acc = 0.0;
  int iters = 0;
  double final_grad = 0.0;
  bool degenerate = false;  // collapsed features; accuracy reflects class priors
};

ProbeResult probe_features(const Tensor& feats, std::span<const int> labels,
                           std::span<const int> train_rows, std::span<const int> eval_rows,
                           int num_classes, const ProbeConfig& cfg = {});

// Probe the checkpoint's representations against a task labeling.  repr_cache,
// if given, must be encode_dataset(ckpt, data).
ProbeResult linear_probe(const train::Checkpoint& ckpt, const cdp::Dataset& data,
                         const cdp::TaskSpec& probe_task, const ProbeConfig& cfg = {},
                         const Tensor* repr_cache = nullptr);

// Geometry of unit-normalized feature rows.
//   alignment : mean squared distance over same-label ordered pairs (lower = tighter)
//   uniformity: log mean exp(-2 d^2) over all distinct ordered pairs (lower = more spread)
//   tolerance : mean dot product over same-label ordered pairs
struct RepMetrics {
  double alignment = 0.0, uniformity = 0.0, tolerance = 0.0;
};
RepMetrics representation_metrics(const Tensor& unit_feats, std::span<const int> labels);

// Correlation statistics for accuracy-vs-information comparisons.
double pearson(std::span<const double> x, std::span<const double> y);
double kendall_tau(std::span<const double> x, std::span<const double> y);  // tau-b

}  // namespace mirig::metrics
