#include "mirig/objective.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace mirig::objective {

namespace {

std::atomic<long> g_bound_checks{0};

void check_unit_rows(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(who) + ": expected (K,d) embeddings");
  int n = t.shape[0], d = t.shape[1];
  for (int i = 0; i < n; ++i) {
    double ss = 0.0;
    for (int j = 0; j < d; ++j) {
      double v = t[int64_t(i) * d + j];
      ss += v * v;
    }
    if (std::fabs(std::sqrt(ss) - 1.0) > 1e-4)
      throw std::invalid_argument(std::string(who) + ": row " + std::to_string(i) +
                                  " is not l2-normalized");
  }
}

double dot_row(const Tensor& a, int i, const Tensor& b, int j) {
  int d = a.shape[1];
  const float* ar = a.data.data() + int64_t(i) * d;
  const float* br = b.data.data() + int64_t(j) * d;
  double acc = 0.0;
  for (int k = 0; k < d; ++k) acc += double(ar[k]) * double(br[k]);
  return acc;
}

// log(sum_j exp(s_j - pos)) over the given scores, max-subtracted.  The
// candidate list always contains pos itself, which keeps the result >= 0 in
// floating point, not just in exact arithmetic.
double anchor_term(const std::vector<double>& scores, double pos) {
  double m = pos;
  for (double s : scores) m = std::max(m, s);
  double acc = std::exp(pos - m);
  for (double s : scores) acc += std::exp(s - m);
  return (m - pos) + std::log(acc);
}

}  // namespace

LossValue nt_xent(const Tensor& emb_x, const Tensor& emb_y, double tau) {
  if (tau <= 0) throw std::invalid_argument("nt_xent: tau must be positive");
  check_unit_rows(emb_x, "nt_xent");
  check_unit_rows(emb_y, "nt_xent");
  if (!same_shape(emb_x.shape, emb_y.shape))
    throw std::invalid_argument("nt_xent: x/y shape mismatch");
  int k = emb_x.shape[0];
  if (k < 1) throw std::invalid_argument("nt_xent: need at least one pair");

  // Batch rows 0..K-1 are x_i, rows K..2K-1 are y_i.
  auto row = [&](int i) -> const Tensor& { return i < k ? emb_x : emb_y; };
  auto idx = [&](int i) { return i < k ? i : i - k; };
  int n = 2 * k;
  LossValue out;
  out.per_anchor.resize(size_t(n));
  std::vector<double> scores;
  scores.reserve(size_t(n - 2));
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    int partner = a < k ? a + k : a - k;
    double pos = dot_row(row(a), idx(a), row(partner), idx(partner)) / tau;
    scores.clear();
    for (int b = 0; b < n; ++b) {
      if (b == a || b == partner) continue;
      scores.push_back(dot_row(row(a), idx(a), row(b), idx(b)) / tau);
    }
    double term = anchor_term(scores, pos);
    out.per_anchor[size_t(a)] = term;
    total += term;
  }
  out.nats = total / double(n);
  return out;
}

LossValue nt_xent_external(const Tensor& emb_x, const Tensor& emb_y, const Tensor& emb_neg,
                           double tau) {
  if (tau <= 0) throw std::invalid_argument("nt_xent_external: tau must be positive");
  check_unit_rows(emb_x, "nt_xent_external");
  check_unit_rows(emb_y, "nt_xent_external");
  check_unit_rows(emb_neg, "nt_xent_external");
  if (!same_shape(emb_x.shape, emb_y.shape))
    throw std::invalid_argument("nt_xent_external: x/y shape mismatch");
  if (emb_neg.shape[1] != emb_x.shape[1])
    throw std::invalid_argument("nt_xent_external: negative dim mismatch");
  int k = emb_x.shape[0], m = emb_neg.shape[0];
  int n = 2 * k;
  LossValue out;
  out.per_anchor.resize(size_t(n));
  std::vector<double> scores(static_cast<size_t>(m), 0.0);
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    const Tensor& anc = a < k ? emb_x : emb_y;
    int ai = a < k ? a : a - k;
    const Tensor& par = a < k ? emb_y : emb_x;
    double pos = dot_row(anc, ai, par, ai) / tau;
    for (int j = 0; j < m; ++j) scores[size_t(j)] = dot_row(anc, ai, emb_neg, j) / tau;
    double term = anchor_term(scores, pos);  // candidates = {pos} + externals
    out.per_anchor[size_t(a)] = term;
    total += term;
  }
  out.nats = total / double(n);
  return out;
}

double bound_bits(int k) {
  if (k < 1) throw std::invalid_argument("bound_bits: K must be >= 1");
  return std::log2(2.0 * k - 1.0);
}

static MiBits mi_from_loss(const LossValue& loss, int k, double candidates) {
  if (loss.nats < 0)
    throw std::invalid_argument("estimated_mi_bits: loss must be non-negative");
  if (!loss.per_anchor.empty() && int(loss.per_anchor.size()) != 2 * k)
    throw std::invalid_argument("estimated_mi_bits: K does not match the batch that produced "
                                "this loss (expected " +
                                std::to_string(loss.per_anchor.size() / 2) + ")");
  MiBits out;
  out.bound_bits = std::log2(candidates);
  out.bits = out.bound_bits - loss.nats / std::log(2.0);
  g_bound_checks.fetch_add(1, std::memory_order_relaxed);
  if (out.bits > out.bound_bits + 1e-9)
    throw std::logic_error("estimated_mi_bits: estimate exceeds log2 of the candidate count; "
                           "numerical fault");
  return out;
}

MiBits estimated_mi_bits(const LossValue& loss, int k) {
  if (k < 1) throw std::invalid_argument("estimated_mi_bits: K must be >= 1");
  return mi_from_loss(loss, k, 2.0 * k - 1.0);
}

MiBits estimated_mi_bits_external(const LossValue& loss, int k, int m) {
  if (k < 1 || m < 1) throw std::invalid_argument("estimated_mi_bits_external: bad K or M");
  return mi_from_loss(loss, k, double(m) + 1.0);
}

long bound_checks_performed() { return g_bound_checks.load(std::memory_order_relaxed); }

double exact_mi_discrete(const std::vector<std::vector<double>>& joint) {
  if (joint.empty() || joint[0].empty())
    throw std::invalid_argument("exact_mi_discrete: empty joint");
  size_t cols = joint[0].size();
  double sum = 0.0;
  for (const auto& row : joint) {
    if (row.size() != cols) throw std::invalid_argument("exact_mi_discrete: ragged joint");
    for (double p : row) {
      if (p < 0) throw std::invalid_argument("exact_mi_discrete: negative probability");
      sum += p;
    }
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("exact_mi_discrete: probabilities sum to " + std::to_string(sum));
  std::vector<double> px(joint.size(), 0.0), py(cols, 0.0);
  for (size_t i = 0; i < joint.size(); ++i)
    for (size_t j = 0; j < cols; ++j) {
      px[i] += joint[i][j];
      py[j] += joint[i][j];
    }
  double mi = 0.0;
  for (size_t i = 0; i < joint.size(); ++i)
    for (size_t j = 0; j < cols; ++j) {
      double p = joint[i][j];
      if (p > 0) mi += p * std::log2(p / (px[i] * py[j]));
    }
  return mi;
}

int append_nt_xent_scores(diff::Graph& g, int scores, int k, int* per_anchor_node) {
  int n = 2 * k;
  const auto& sh = g.node(scores).shape;
  if (sh.size() != 2 || sh[0] != n || sh[1] != n)
    throw std::invalid_argument("append_nt_xent_scores: expected (2K,2K) scores");

  // Mask self-similarity on the diagonal; pick the positive with a partner
  // permutation matrix so everything stays inside the graph.
  Tensor mask({n, n});
  Tensor perm({n, n});
  for (int i = 0; i < n; ++i) {
    mask[int64_t(i) * n + i] = -1e30f;
    int partner = i < k ? i + k : i - k;
    perm[int64_t(i) * n + partner] = 1.0f;
  }
  int masked = g.add(scores, g.constant(mask));
  int lse = g.lse_rows(masked);
  int pos = g.row_sum(g.mul(scores, g.constant(perm)));
  int per_anchor = g.sub(lse, pos);
  if (per_anchor_node) *per_anchor_node = per_anchor;
  return g.mean_all(per_anchor);
}

int append_nt_xent(diff::Graph& g, int emb2k, int k, double tau, int* per_anchor_node) {
  if (tau <= 0) throw std::invalid_argument("append_nt_xent: tau must be positive");
  const auto& sh = g.node(emb2k).shape;
  if (sh.size() != 2 || sh[0] != 2 * k)
    throw std::invalid_argument("append_nt_xent: expected (2K,d) embeddings");
  int scores = g.scale(g.matmul_bt(emb2k, emb2k), 1.0 / tau);
  return append_nt_xent_scores(g, scores, k, per_anchor_node);
}

int append_nt_xent_external(diff::Graph& g, int emb_all, int k, int m, double tau,
                            int* per_anchor_node) {
  if (tau <= 0) throw std::invalid_argument("append_nt_xent_external: tau must be positive");
  const auto& sh = g.node(emb_all).shape;
  if (sh.size() != 2 || sh[0] != 2 * k + m)
    throw std::invalid_argument("append_nt_xent_external: expected (2K+M,d) embeddings");
  int ex = g.slice_rows(emb_all, 0, k);
  int ey = g.slice_rows(emb_all, k, k);
  int en = g.slice_rows(emb_all, 2 * k, m);
  int pos_k = g.row_sum(g.mul(ex, ey));                  // (K)
  int pos_2k = g.concat_rows(pos_k, pos_k);              // (2K); same order as anchors
  int anchors = g.concat_rows(ex, ey);                   // (2K,d)
  int neg_scores = g.matmul_bt(anchors, en);             // (2K,M)
  int all = g.concat_cols(g.reshape(pos_2k, {2 * k, 1}), neg_scores);
  int scaled = g.scale(all, 1.0 / tau);
  int lse = g.lse_rows(scaled);
  int per_anchor = g.sub(lse, g.scale(pos_2k, 1.0 / tau));
  if (per_anchor_node) *per_anchor_node = per_anchor;
  return g.mean_all(per_anchor);
}

}  // namespace mirig::objective
