#include "mirig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mirig::metrics {

namespace {

// Rows of feats (double-cast) with a trailing bias column.
struct DesignMatrix {
  std::vector<double> x;  // (n, d1) row-major
  int n = 0, d1 = 0;
  const double* row(int i) const { return x.data() + size_t(i) * size_t(d1); }
};

DesignMatrix gather(const Tensor& feats, std::span<const int> rows) {
  const int d = feats.shape[1];
  DesignMatrix m;
  m.n = int(rows.size());
  m.d1 = d + 1;
  m.x.resize(size_t(m.n) * size_t(m.d1));
  for (int i = 0; i < m.n; ++i) {
    const float* src = feats.data.data() + size_t(rows[size_t(i)]) * size_t(d);
    double* dst = m.x.data() + size_t(i) * size_t(m.d1);
    for (int j = 0; j < d; ++j) dst[j] = double(src[j]);
    dst[d] = 1.0;
  }
  return m;
}

// Largest eigenvalue of X^T X by power iteration on the (d1, d1) Gram matrix.
double gram_lambda_max(const DesignMatrix& m) {
  const int d1 = m.d1;
  std::vector<double> gram(size_t(d1) * size_t(d1), 0.0);
  for (int i = 0; i < m.n; ++i) {
    const double* r = m.row(i);
    for (int a = 0; a < d1; ++a)
      for (int b = 0; b < d1; ++b) gram[size_t(a) * size_t(d1) + size_t(b)] += r[a] * r[b];
  }
  std::vector<double> v(size_t(d1), 1.0 / std::sqrt(double(d1))), w(size_t(d1), 0.0);
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    for (int a = 0; a < d1; ++a) {
      double s = 0.0;
      for (int b = 0; b < d1; ++b) s += gram[size_t(a) * size_t(d1) + size_t(b)] * v[size_t(b)];
      w[size_t(a)] = s;
    }
    double norm = 0.0;
    for (double z : w) norm += z * z;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (int a = 0; a < d1; ++a) v[size_t(a)] = w[size_t(a)] / norm;
    lambda = norm;
  }
  return lambda;
}

double accuracy(const DesignMatrix& m, const std::vector<int>& lab, const std::vector<double>& w,
                int c) {
  if (m.n == 0) return 0.0;
  int hits = 0;
  for (int i = 0; i < m.n; ++i) {
    const double* r = m.row(i);
    int best = 0;
    double best_s = -1e300;
    for (int k = 0; k < c; ++k) {
      double s = 0.0;
      const double* wk = w.data() + size_t(k) * size_t(m.d1);
      for (int j = 0; j < m.d1; ++j) s += wk[j] * r[j];
      if (s > best_s) {
        best_s = s;
        best = k;
      }
    }
    if (best == lab[size_t(i)]) ++hits;
  }
  return double(hits) / double(m.n);
}

}  // namespace

ProbeResult probe_features(const Tensor& feats, std::span<const int> labels,
                           std::span<const int> train_rows, std::span<const int> eval_rows,
                           int num_classes, const ProbeConfig& cfg) {
  if (feats.rank() != 2) throw std::invalid_argument("probe_features: feats must be (n, d)");
  if (int64_t(labels.size()) != int64_t(feats.shape[0]))
    throw std::invalid_argument("probe_features: labels size mismatch");
  if (num_classes < 2) throw std::invalid_argument("probe_features: need at least two classes");
  if (train_rows.empty() || eval_rows.empty())
    throw std::invalid_argument("probe_features: empty row subset");
  for (int r : labels)
    if (r < 0 || r >= num_classes)
      throw std::invalid_argument("probe_features: label out of range");
  auto check_rows = [&](std::span<const int> rows) {
    for (int r : rows)
      if (r < 0 || r >= feats.shape[0])
        throw std::invalid_argument("probe_features: row index out of range");
  };
  check_rows(train_rows);
  check_rows(eval_rows);

  std::vector<int> tr(train_rows.begin(), train_rows.end());
  if (cfg.max_train_rows > 0 && int(tr.size()) > cfg.max_train_rows)
    tr.resize(size_t(cfg.max_train_rows));

  DesignMatrix mt = gather(feats, tr);
  DesignMatrix me = gather(feats, eval_rows);
  std::vector<int> lt, le;
  for (int r : tr) lt.push_back(labels[size_t(r)]);
  for (int r : eval_rows) le.push_back(labels[size_t(r)]);

  ProbeResult out;
  const int c = num_classes, d1 = mt.d1, n = mt.n;

  // Collapsed features leave only the bias direction; the fit then recovers the
  // class priors, which is worth flagging.
  double spread = 0.0;
  for (int j = 0; j + 1 < d1; ++j) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < n; ++i) {
      lo = std::min(lo, mt.row(i)[j]);
      hi = std::max(hi, mt.row(i)[j]);
    }
    spread = std::max(spread, hi - lo);
  }
  out.degenerate = spread < 1e-9;

  // Logistic Hessian is bounded by (1/2) X^T X / n plus the ridge.
  double lips = gram_lambda_max(mt) / (2.0 * double(n)) + cfg.l2;
  double lr = lips > 0.0 ? 1.0 / lips : 1.0;

  std::vector<double> w(size_t(c) * size_t(d1), 0.0), vel(w.size(), 0.0), grad(w.size());
  std::vector<double> logits(size_t(c), 0.0);
  for (out.iters = 0; out.iters < cfg.max_iters; ++out.iters) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double* r = mt.row(i);
      double mx = -1e300;
      for (int k = 0; k < c; ++k) {
        double s = 0.0;
        const double* wk = w.data() + size_t(k) * size_t(d1);
        for (int j = 0; j < d1; ++j) s += wk[j] * r[j];
        logits[size_t(k)] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (int k = 0; k < c; ++k) z += std::exp(logits[size_t(k)] - mx);
      for (int k = 0; k < c; ++k) {
        double p = std::exp(logits[size_t(k)] - mx) / z;
        double coef = (p - (k == lt[size_t(i)] ? 1.0 : 0.0)) / double(n);
        double* gk = grad.data() + size_t(k) * size_t(d1);
        for (int j = 0; j < d1; ++j) gk[j] += coef * r[j];
      }
    }
    double gmax = 0.0;
    for (size_t j = 0; j < w.size(); ++j) {
      grad[j] += cfg.l2 * w[j];
      gmax = std::max(gmax, std::abs(grad[j]));
    }
    out.final_grad = gmax;
    if (gmax < cfg.tol) break;
    for (size_t j = 0; j < w.size(); ++j) {
      vel[j] = cfg.momentum * vel[j] - lr * grad[j];
      w[j] += vel[j];
    }
  }

  out.train_acc = accuracy(mt, lt, w, c);
  out.eval_acc = accuracy(me, le, w, c);
  return out;
}

ProbeResult linear_probe(const train::Checkpoint& ckpt, const cdp::Dataset& data,
                         const cdp::TaskSpec& probe_task, const ProbeConfig& cfg,
                         const Tensor* repr_cache) {
  Tensor local;
  const Tensor* reprs = repr_cache;
  if (reprs) {
    if (reprs->rank() != 2 || reprs->shape[0] != int(data.samples.size()) ||
        reprs->shape[1] != ckpt.spec.repr_dim)
      throw std::invalid_argument("linear_probe: repr cache shape mismatch");
  } else {
    local = train::encode_dataset(ckpt, data);
    reprs = &local;
  }
  std::vector<int> labels;
  labels.reserve(data.samples.size());
  for (const auto& s : data.samples) labels.push_back(probe_task.class_id(s.attrs));
  return probe_features(*reprs, labels, data.train_idx, data.eval_idx, probe_task.num_classes(),
                        cfg);
}

RepMetrics representation_metrics(const Tensor& unit_feats, std::span<const int> labels) {
  if (unit_feats.rank() != 2)
    throw std::invalid_argument("representation_metrics: feats must be (n, d)");
  const int n = unit_feats.shape[0], d = unit_feats.shape[1];
  if (int64_t(labels.size()) != int64_t(n))
    throw std::invalid_argument("representation_metrics: labels size mismatch");
  if (n < 2) throw std::invalid_argument("representation_metrics: need at least two rows");
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    const float* r = unit_feats.data.data() + size_t(i) * size_t(d);
    for (int j = 0; j < d; ++j) norm += double(r[j]) * double(r[j]);
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-4)
      throw std::invalid_argument("representation_metrics: rows must be unit-normalized");
  }

  double align = 0.0, tol = 0.0, unif = 0.0;
  int64_t same = 0, all = 0;
  for (int i = 0; i < n; ++i) {
    const float* ri = unit_feats.data.data() + size_t(i) * size_t(d);
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const float* rj = unit_feats.data.data() + size_t(j) * size_t(d);
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += double(ri[k]) * double(rj[k]);
      double d2 = std::max(0.0, 2.0 - 2.0 * dot);  // unit rows: ||a-b||^2 = 2 - 2 a.b
      unif += std::exp(-2.0 * d2);
      ++all;
      if (labels[size_t(i)] == labels[size_t(j)]) {
        align += d2;
        tol += dot;
        ++same;
      }
    }
  }
  if (same == 0)
    throw std::invalid_argument("representation_metrics: no same-label pair to align");
  return {align / double(same), std::log(unif / double(all)), tol / double(same)};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("pearson: need two equal-length series of size >= 2");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw std::invalid_argument("pearson: zero-variance series");
  return sxy / std::sqrt(sxx * syy);
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("kendall_tau: need two equal-length series of size >= 2");
  const int n = int(x.size());
  int64_t conc = 0, disc = 0, tie_x = 0, tie_y = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double dx = x[size_t(j)] - x[size_t(i)], dy = y[size_t(j)] - y[size_t(i)];
      if (dx == 0.0 && dy == 0.0) {
        ++tie_x;
        ++tie_y;
      } else if (dx == 0.0) {
        ++tie_x;
      } else if (dy == 0.0) {
        ++tie_y;
      } else if (dx * dy > 0.0) {
        ++conc;
      } else {
        ++disc;
      }
    }
  int64_t n0 = int64_t(n) * (n - 1) / 2;
  double denom = std::sqrt(double(n0 - tie_x)) * std::sqrt(double(n0 - tie_y));
  if (denom == 0.0) throw std::invalid_argument("kendall_tau: all pairs tied");
  return double(conc - disc) / denom;
}

}  // namespace mirig::metrics
