#include "mirig/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <stdexcept>

#include "mirig/models.hpp"
#include "mirig/objective.hpp"

namespace mirig::estimate {

std::string EstimationConfig::canonical() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "k_est=%d|strategy=%s|steps=%d|eval_batches=%d|tau=%.17g|opt=%s|lr=%.17g|"
                "mom=%.17g|b1=%.17g|b2=%.17g|eps=%.17g|seed=%llu|epsilon=%.17g|ch=%d|co=%d|"
                "pool=%d|epool=%d",
                k_est, strategy.to_string().c_str(), steps, eval_batches, tau,
                opt.algo == diff::OptConfig::Algo::adam ? "adam" : "sgd", opt.lr, opt.momentum,
                opt.beta1, opt.beta2, opt.eps, (unsigned long long)seed, epsilon, critic_hidden,
                critic_out, aug_pool_pairs, aug_eval_pool_pairs);
  return buf;
}

uint64_t EstimationConfig::hash() const { return fnv1a64(canonical()); }

const char* status_name(TheoremStatus s) {
  switch (s) {
    case TheoremStatus::pinned: return "Pinned";
    case TheoremStatus::lower_bound_only: return "LowerBoundOnly";
    case TheoremStatus::estimator_violation: return "EstimatorViolation";
  }
  return "?";
}

TheoremStatus theorem1_status(double estimate_bits, double entropy_bits, double eps) {
  if (!(eps >= 0.0)) throw std::invalid_argument("theorem1_status: eps must be >= 0");
  if (!std::isfinite(estimate_bits) || !std::isfinite(entropy_bits))
    throw std::invalid_argument("theorem1_status: non-finite input");
  if (estimate_bits > entropy_bits + eps) return TheoremStatus::estimator_violation;
  if (estimate_bits < entropy_bits - eps) return TheoremStatus::lower_bound_only;
  return TheoremStatus::pinned;
}

BoundCheck check_bound(const MiEstimate& est) {
  double margin = est.bound_bits - est.bits;
  return {margin >= -1e-9, margin};
}

namespace {

// Critic training + held-out evaluation shared by both pairing paths.  fill(b,
// input) writes the (2K, d) batch: rows [0,K) are x-side representations,
// [K,2K) the paired y-side.
struct CriticOutcome {
  std::vector<double> curve_bits;
  double mean_bits = 0.0, std_bits = 0.0;
};

CriticOutcome run_critic(const models::CriticSpec& cspec, const EstimationConfig& cfg,
                         const std::function<void(Rng&, Tensor&)>& fill) {
  const int k = cfg.k_est;
  models::CriticGraph cg = models::build_critic(cspec, 2 * k);
  int per_anchor = -1;
  int loss_node = objective::append_nt_xent(cg.g, cg.emb, k, cfg.tau, &per_anchor);
  cg.g.set_output(loss_node);

  diff::ParamSet ps;
  ps.rng_seed = cfg.seed;
  Rng init = Rng(cfg.seed).fork(0xC817);
  models::init_critic_params(ps, cspec, init);
  diff::Optimizer opt(cfg.opt);

  Tensor input({2 * k, cspec.in_dim});
  diff::ExecState<float> st;
  CriticOutcome out;
  out.curve_bits.reserve(size_t(cfg.steps));

  auto batch_bits = [&](bool with_grads) {
    if (with_grads) {
      ps.zero_grads();
      st.record_kinks = false;
      st.check_finite = true;
      diff::run_forward(cg.g, ps, {&input}, st);
      diff::run_backward(cg.g, ps, st);
    } else {
      st.check_finite = true;
      diff::run_forward(cg.g, ps, {&input}, st);
    }
    objective::LossValue lv;
    lv.nats = double(st.value[size_t(loss_node)].data[0]);
    const Tensor& pa = st.value[size_t(per_anchor)];
    lv.per_anchor.assign(pa.data.begin(), pa.data.end());
    return objective::estimated_mi_bits(lv, k).bits;
  };

  for (int s = 0; s < cfg.steps; ++s) {
    Rng rng = Rng(cfg.seed).fork(0x7A11).fork(uint64_t(s));
    fill(rng, input);
    out.curve_bits.push_back(batch_bits(true));
    opt.step(ps);
  }

  std::vector<double> held;
  held.reserve(size_t(cfg.eval_batches));
  for (int b = 0; b < cfg.eval_batches; ++b) {
    Rng rng = Rng(cfg.seed).fork(0xE7A1).fork(uint64_t(b));
    fill(rng, input);
    held.push_back(batch_bits(false));
  }
  double sum = 0.0;
  for (double v : held) sum += v;
  out.mean_bits = sum / double(held.size());
  double ss = 0.0;
  for (double v : held) ss += (v - out.mean_bits) * (v - out.mean_bits);
  out.std_bits = held.size() > 1 ? std::sqrt(ss / double(held.size() - 1)) : 0.0;
  return out;
}

void copy_row(Tensor& dst, int dst_row, const Tensor& src, int src_row, int d) {
  std::memcpy(dst.data.data() + size_t(dst_row) * size_t(d),
              src.data.data() + size_t(src_row) * size_t(d), size_t(d) * sizeof(float));
}

// Frozen representations of two augmented views per pool entry, encoded in
// image chunks to keep the transient view images small.
struct ViewPool {
  Tensor x, y;  // (P, repr_dim)
};

ViewPool build_view_pool(const train::Checkpoint& ckpt, const cdp::Dataset& data,
                         std::span<const int> subset, const std::vector<pairing::AugOp>& ops,
                         int pairs, uint64_t seed, uint64_t tag) {
  if (subset.empty()) throw std::runtime_error("estimate_mi: empty index subset for view pool");
  const int d = ckpt.spec.repr_dim;
  ViewPool pool;
  pool.x = Tensor({pairs, d});
  pool.y = Tensor({pairs, d});
  const int chunk = 128;
  std::vector<Tensor> vx, vy;
  vx.reserve(chunk);
  vy.reserve(chunk);
  int base = 0;
  auto flush = [&]() {
    if (vx.empty()) return;
    std::vector<const Tensor*> px, py;
    for (auto& t : vx) px.push_back(&t);
    for (auto& t : vy) py.push_back(&t);
    Tensor rx = models::encode_reprs(ckpt.spec, ckpt.params, px);
    Tensor ry = models::encode_reprs(ckpt.spec, ckpt.params, py);
    for (int r = 0; r < int(vx.size()); ++r) {
      copy_row(pool.x, base + r, rx, r, d);
      copy_row(pool.y, base + r, ry, r, d);
    }
    base += int(vx.size());
    vx.clear();
    vy.clear();
  };
  for (int p = 0; p < pairs; ++p) {
    Rng rng = Rng(seed).fork(tag).fork(uint64_t(p));
    int src = subset[size_t(rng.uniform_int(uint64_t(subset.size())))];
    const Tensor& img = data.samples[size_t(src)].image;
    vx.push_back(pairing::apply_ops(img, ops, rng));
    vy.push_back(pairing::apply_ops(img, ops, rng));
    if (int(vx.size()) == chunk) flush();
  }
  flush();
  return pool;
}

}  // namespace

MiEstimate estimate_mi(const train::Checkpoint& ckpt, const EstimationConfig& cfg,
                       const cdp::Dataset& data, const Tensor* repr_cache) {
  if (cfg.k_est < 1) throw std::invalid_argument("estimate_mi: k_est must be >= 1");
  if (cfg.steps < 0) throw std::invalid_argument("estimate_mi: steps must be >= 0");
  if (cfg.eval_batches < 1) throw std::invalid_argument("estimate_mi: eval_batches must be >= 1");
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("estimate_mi: tau must be positive");
  if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("estimate_mi: epsilon must be >= 0");

  const int d = ckpt.spec.repr_dim;
  models::CriticSpec cspec;
  cspec.in_dim = d;
  cspec.hidden = cfg.critic_hidden > 0 ? cfg.critic_hidden : d;
  cspec.out_dim = cfg.critic_out > 0 ? cfg.critic_out : ckpt.spec.proj_dim;

  MiEstimate est;
  est.k_est = cfg.k_est;
  est.bound_bits = objective::bound_bits(cfg.k_est);
  est.pairing_desc = cfg.strategy.to_string();
  est.epsilon = cfg.epsilon;

  CriticOutcome outcome;
  if (cfg.strategy.kind == pairing::Strategy::Kind::same_class) {
    Tensor local;
    const Tensor* reprs = repr_cache;
    if (reprs) {
      if (reprs->rank() != 2 || reprs->shape[0] != int(data.samples.size()) ||
          reprs->shape[1] != d)
        throw std::invalid_argument("estimate_mi: repr cache shape mismatch");
    } else {
      local = train::encode_dataset(ckpt, data);
      reprs = &local;
    }
    pairing::SameClassIndex tidx(data, data.train_idx, cfg.strategy.task);
    pairing::SameClassIndex eidx(data, data.eval_idx, cfg.strategy.task);
    int64_t need = int64_t(cfg.eval_batches) * int64_t(cfg.k_est);
    if (eidx.total_ordered_pairs() < need) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "estimate_mi: held-out split supports %lld same-class ordered pairs; "
                    "estimation needs at least %lld (eval_batches * k_est)",
                    (long long)eidx.total_ordered_pairs(), (long long)need);
      throw std::runtime_error(buf);
    }
    // run_critic calls fill for the cfg.steps training batches first, then for
    // the held-out batches; the call counter switches the pair source.
    int call_no = 0;
    auto fill = [&, reprs](Rng& rng, Tensor& input) {
      const pairing::SameClassIndex& idx = call_no++ < cfg.steps ? tidx : eidx;
      for (int p = 0; p < cfg.k_est; ++p) {
        auto [i, j] = idx.sample_pair(rng);
        copy_row(input, p, *reprs, i, d);
        copy_row(input, cfg.k_est + p, *reprs, j, d);
      }
    };
    outcome = run_critic(cspec, cfg, fill);
    est.entropy_bits = cdp::class_entropy_bits(cfg.strategy.task);
    est.status = theorem1_status(outcome.mean_bits, est.entropy_bits, cfg.epsilon);
  } else {
    if (cfg.aug_pool_pairs < cfg.k_est || cfg.aug_eval_pool_pairs < cfg.k_est)
      throw std::invalid_argument(
          "estimate_mi: augmented view pools must hold at least k_est pairs");
    ViewPool tp = build_view_pool(ckpt, data, data.train_idx, cfg.strategy.ops,
                                  cfg.aug_pool_pairs, cfg.seed, 0xA06);
    ViewPool ep = build_view_pool(ckpt, data, data.eval_idx, cfg.strategy.ops,
                                  cfg.aug_eval_pool_pairs, cfg.seed, 0xA07);
    std::vector<int> scratch;
    int call_no = 0;
    auto fill = [&](Rng& rng, Tensor& input) {
      const ViewPool& pool = call_no++ < cfg.steps ? tp : ep;
      int pool_n = pool.x.shape[0];
      scratch.resize(size_t(pool_n));
      for (int i = 0; i < pool_n; ++i) scratch[size_t(i)] = i;
      for (int p = 0; p < cfg.k_est; ++p) {  // partial Fisher-Yates: K distinct entries
        int r = p + int(rng.uniform_int(uint64_t(pool_n - p)));
        std::swap(scratch[size_t(p)], scratch[size_t(r)]);
        copy_row(input, p, pool.x, scratch[size_t(p)], d);
        copy_row(input, cfg.k_est + p, pool.y, scratch[size_t(p)], d);
      }
    };
    outcome = run_critic(cspec, cfg, fill);
    est.entropy_bits = std::numeric_limits<double>::quiet_NaN();
    est.status = TheoremStatus::lower_bound_only;  // no class variable to pin against
  }

  est.bits = outcome.mean_bits;
  est.std_bits = outcome.std_bits;
  est.train_curve_bits = std::move(outcome.curve_bits);
  double envelope = 0.0;
  for (double v : est.train_curve_bits) envelope = std::max(envelope, v);
  est.overfit_flag =
      !est.train_curve_bits.empty() && est.bits > envelope + 3.0 * est.std_bits;
  return est;
}

MiEstimate estimate_mi_tabular(const std::vector<std::vector<double>>& joint,
                               const TabularConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("estimate_mi_tabular: k must be >= 1");
  if (cfg.eval_batches < 1)
    throw std::invalid_argument("estimate_mi_tabular: eval_batches must be >= 1");
  size_t rows = joint.size();
  if (rows == 0) throw std::invalid_argument("estimate_mi_tabular: empty joint");
  size_t cols = joint[0].size();
  double total = 0.0;
  for (const auto& r : joint) {
    if (r.size() != cols) throw std::invalid_argument("estimate_mi_tabular: ragged joint");
    for (double p : r) {
      if (p < 0.0) throw std::invalid_argument("estimate_mi_tabular: negative probability");
      total += p;
    }
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("estimate_mi_tabular: joint must sum to 1");
  if (rows != cols)
    throw std::invalid_argument("estimate_mi_tabular: joint must be square (shared alphabet)");

  const int n = int(rows), k = cfg.k;
  std::vector<double> cum;
  cum.reserve(rows * cols);
  double acc = 0.0;
  for (const auto& r : joint)
    for (double p : r) cum.push_back(acc += p);
  cum.back() = 1.0;

  // Free-table critic t(u, v): one-hot rows through a shared weight matrix,
  // scored against the one-hot batch itself, so S[i][j] = t[a_i][c_j].
  diff::Graph g;
  int in = g.input({2 * k, n});
  int t = g.param("tab.t", {n, n});
  int b0 = g.constant(Tensor({n}));
  int lin = g.affine(in, t, b0);
  int scores = g.matmul_bt(lin, in);
  int per_anchor = -1;
  int loss_node = objective::append_nt_xent_scores(g, scores, k, &per_anchor);
  g.set_output(loss_node);

  diff::ParamSet ps;
  ps.rng_seed = cfg.seed;
  ps.add("tab.t", {n, n});  // zero start: uniform scores
  diff::OptConfig oc;
  oc.algo = diff::OptConfig::Algo::adam;
  oc.lr = cfg.lr;
  diff::Optimizer opt(oc);

  Tensor input({2 * k, n});
  diff::ExecState<float> st;

  auto fill = [&](Rng& rng) {
    input.fill(0.0f);
    for (int p = 0; p < k; ++p) {
      double u = rng.next_double();
      size_t cell = size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
      if (cell >= cum.size()) cell = cum.size() - 1;
      int a = int(cell / cols), b = int(cell % cols);
      input.data[size_t(p) * size_t(n) + size_t(a)] = 1.0f;
      input.data[size_t(k + p) * size_t(n) + size_t(b)] = 1.0f;
    }
  };
  auto batch_bits = [&](bool with_grads) {
    if (with_grads) ps.zero_grads();
    st.check_finite = true;
    diff::run_forward(g, ps, {&input}, st);
    if (with_grads) diff::run_backward(g, ps, st);
    objective::LossValue lv;
    lv.nats = double(st.value[size_t(loss_node)].data[0]);
    const Tensor& pa = st.value[size_t(per_anchor)];
    lv.per_anchor.assign(pa.data.begin(), pa.data.end());
    return objective::estimated_mi_bits(lv, k).bits;
  };

  MiEstimate est;
  est.k_est = k;
  est.bound_bits = objective::bound_bits(k);
  est.pairing_desc = "tabular";
  est.entropy_bits = std::numeric_limits<double>::quiet_NaN();
  est.status = TheoremStatus::lower_bound_only;
  est.train_curve_bits.reserve(size_t(cfg.steps));
  for (int s = 0; s < cfg.steps; ++s) {
    Rng rng = Rng(cfg.seed).fork(0x7AB1).fork(uint64_t(s));
    fill(rng);
    est.train_curve_bits.push_back(batch_bits(true));
    opt.step(ps);
  }
  std::vector<double> held;
  for (int b = 0; b < cfg.eval_batches; ++b) {
    Rng rng = Rng(cfg.seed).fork(0xEAB1).fork(uint64_t(b));
    fill(rng);
    held.push_back(batch_bits(false));
  }
  double sum = 0.0;
  for (double v : held) sum += v;
  est.bits = sum / double(held.size());
  double ss = 0.0;
  for (double v : held) ss += (v - est.bits) * (v - est.bits);
  est.std_bits = held.size() > 1 ? std::sqrt(ss / double(held.size() - 1)) : 0.0;
  return est;
}

}  // namespace mirig::estimate
