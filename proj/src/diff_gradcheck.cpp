#include <algorithm>
#include <cmath>

#include "mirig/graph.hpp"
#include "mirig/rng.hpp"

namespace mirig::diff {

GradCheckReport grad_check(const Graph& g, const ParamSet& params,
                           const std::vector<const Tensor*>& inputs,
                           const GradCheckOptions& opt) {
  if (opt.step <= 0) throw std::invalid_argument("grad_check: step must be positive");
  auto pd = params.cast<double>();
  std::vector<TensorT<double>> owned;
  owned.reserve(inputs.size());
  for (const Tensor* t : inputs) owned.push_back(t->cast<double>());
  std::vector<const TensorT<double>*> in_d;
  for (auto& t : owned) in_d.push_back(&t);

  ExecState<double> st;
  st.check_finite = true;
  pd.zero_grads();
  run_forward(g, pd, in_d, st);
  run_backward(g, pd, st);
  std::vector<TensorT<double>> analytic;
  for (auto& e : pd.entries) analytic.push_back(e.grad);

  int64_t total = pd.total_params();
  std::vector<std::pair<size_t, int64_t>> coords;  // (entry, flat index)
  if (total <= opt.max_samples) {
    for (size_t p = 0; p < pd.entries.size(); ++p)
      for (int64_t i = 0; i < pd.entries[p].value.numel(); ++i) coords.push_back({p, i});
  } else {
    Rng rng(opt.seed);
    std::vector<int64_t> seen;
    while (int(coords.size()) < opt.max_samples) {
      int64_t flat = int64_t(rng.uniform_int(uint64_t(total)));
      if (std::find(seen.begin(), seen.end(), flat) != seen.end()) continue;
      seen.push_back(flat);
      int64_t rem = flat;
      for (size_t p = 0; p < pd.entries.size(); ++p) {
        int64_t n = pd.entries[p].value.numel();
        if (rem < n) {
          coords.push_back({p, rem});
          break;
        }
        rem -= n;
      }
    }
  }

  GradCheckReport rep;
  ExecState<double> probe;
  probe.record_kinks = true;
  probe.check_finite = true;
  for (auto [p, i] : coords) {
    double orig = pd.entries[p].value[i];
    pd.entries[p].value[i] = orig + opt.step;
    run_forward(g, pd, in_d, probe);
    double fp = probe.value[size_t(g.output())][0];
    uint64_t hp = probe.kink_hash;
    pd.entries[p].value[i] = orig - opt.step;
    run_forward(g, pd, in_d, probe);
    double fm = probe.value[size_t(g.output())][0];
    uint64_t hm = probe.kink_hash;
    pd.entries[p].value[i] = orig;
    if (hp != hm) {
      ++rep.skipped_nondiff;  // probe straddles a relu kink or norm guard
      continue;
    }
    double numeric = (fp - fm) / (2.0 * opt.step);
    double exact = analytic[p][i];
    double rel = std::fabs(exact - numeric) /
                 std::max({std::fabs(exact), std::fabs(numeric), 1e-8});
    ++rep.samples;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst = pd.entries[p].name + "[" + std::to_string(i) + "]";
    }
  }
  return rep;
}

}  // namespace mirig::diff
