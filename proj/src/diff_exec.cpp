#include <cmath>
#include <stdexcept>

#include "mirig/graph.hpp"

namespace mirig::diff {

namespace {

// Incremental bit-packing hasher for activation sign patterns.
struct KinkHasher {
  uint64_t h = 0xCBF29CE484222325ull;
  uint64_t word = 0;
  int bits = 0;
  void push(bool b) {
    word = (word << 1) | uint64_t(b);
    if (++bits == 64) flush();
  }
  void flush() {
    if (bits == 0) return;
    h ^= word;
    h *= 0x100000001B3ull;
    word = 0;
    bits = 0;
  }
};

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (const T& v : t.data)
    if (!std::isfinite(double(v))) return false;
  return true;
}

struct ConvDims {
  int N, Ci, H, W, Co, K, P, S, Ho, Wo;
};

ConvDims conv_dims(const Node& n, const std::vector<int>& xs, const std::vector<int>& ws) {
  ConvDims d;
  d.N = xs[0]; d.Ci = xs[1]; d.H = xs[2]; d.W = xs[3];
  d.Co = ws[0]; d.K = ws[2]; d.P = (d.K - 1) / 2; d.S = n.stride;
  d.Ho = n.shape[2]; d.Wo = n.shape[3];
  return d;
}

inline int lo_index(int off, int s) { return off > 0 ? (off + s - 1) / s : 0; }

template <typename T>
void conv2d_forward(const Node& n, const TensorT<T>& x, const TensorT<T>& w,
                    const TensorT<T>& b, TensorT<T>& y) {
  ConvDims d = conv_dims(n, x.shape, w.shape);
  for (int nn = 0; nn < d.N; ++nn) {
    for (int co = 0; co < d.Co; ++co) {
      T* out = y.data.data() + (int64_t(nn) * d.Co + co) * d.Ho * d.Wo;
      std::fill(out, out + int64_t(d.Ho) * d.Wo, b[co]);
      for (int ci = 0; ci < d.Ci; ++ci) {
        const T* xp = x.data.data() + (int64_t(nn) * d.Ci + ci) * d.H * d.W;
        for (int kh = 0; kh < d.K; ++kh) {
          int ho_lo = lo_index(d.P - kh, d.S);
          int ho_hi = std::min(d.Ho, (d.H - 1 + d.P - kh) / d.S + 1);
          for (int kw = 0; kw < d.K; ++kw) {
            T wv = w[((int64_t(co) * d.Ci + ci) * d.K + kh) * d.K + kw];
            int wo_lo = lo_index(d.P - kw, d.S);
            int wo_hi = std::min(d.Wo, (d.W - 1 + d.P - kw) / d.S + 1);
            for (int ho = ho_lo; ho < ho_hi; ++ho) {
              const T* xrow = xp + int64_t(ho * d.S - d.P + kh) * d.W + (kw - d.P);
              T* orow = out + int64_t(ho) * d.Wo;
              if (d.S == 1) {
                for (int wo = wo_lo; wo < wo_hi; ++wo) orow[wo] += wv * xrow[wo];
              } else {
                for (int wo = wo_lo; wo < wo_hi; ++wo) orow[wo] += wv * xrow[2 * wo];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const Node& n, const TensorT<T>& x, const TensorT<T>& w,
                     const TensorT<T>& dy, TensorT<T>& dx, TensorT<T>& dw, TensorT<T>& db) {
  ConvDims d = conv_dims(n, x.shape, w.shape);
  for (int nn = 0; nn < d.N; ++nn) {
    for (int co = 0; co < d.Co; ++co) {
      const T* dyp = dy.data.data() + (int64_t(nn) * d.Co + co) * d.Ho * d.Wo;
      T acc_b = T(0);
      for (int64_t i = 0; i < int64_t(d.Ho) * d.Wo; ++i) acc_b += dyp[i];
      db[co] += acc_b;
      for (int ci = 0; ci < d.Ci; ++ci) {
        const T* xp = x.data.data() + (int64_t(nn) * d.Ci + ci) * d.H * d.W;
        T* dxp = dx.data.data() + (int64_t(nn) * d.Ci + ci) * d.H * d.W;
        for (int kh = 0; kh < d.K; ++kh) {
          int ho_lo = lo_index(d.P - kh, d.S);
          int ho_hi = std::min(d.Ho, (d.H - 1 + d.P - kh) / d.S + 1);
          for (int kw = 0; kw < d.K; ++kw) {
            int64_t widx = ((int64_t(co) * d.Ci + ci) * d.K + kh) * d.K + kw;
            T wv = w[widx];
            T acc_w = T(0);
            int wo_lo = lo_index(d.P - kw, d.S);
            int wo_hi = std::min(d.Wo, (d.W - 1 + d.P - kw) / d.S + 1);
            for (int ho = ho_lo; ho < ho_hi; ++ho) {
              int64_t xoff = int64_t(ho * d.S - d.P + kh) * d.W + (kw - d.P);
              const T* xrow = xp + xoff;
              T* dxrow = dxp + xoff;
              const T* dyrow = dyp + int64_t(ho) * d.Wo;
              if (d.S == 1) {
                for (int wo = wo_lo; wo < wo_hi; ++wo) {
                  acc_w += dyrow[wo] * xrow[wo];
                  dxrow[wo] += wv * dyrow[wo];
                }
              } else {
                for (int wo = wo_lo; wo < wo_hi; ++wo) {
                  acc_w += dyrow[wo] * xrow[2 * wo];
                  dxrow[2 * wo] += wv * dyrow[wo];
                }
              }
            }
            dw[widx] += acc_w;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void run_forward(const Graph& g, const ParamSetT<T>& params,
                 const std::vector<const TensorT<T>*>& inputs, ExecState<T>& st) {
  const auto& nodes = g.nodes();
  if (inputs.size() != g.input_ids().size())
    throw std::invalid_argument("run_forward: expected " + std::to_string(g.input_ids().size()) +
                                " inputs, got " + std::to_string(inputs.size()));
  if (int(st.value.size()) != g.size()) {
    st.value.assign(size_t(g.size()), {});
    for (int i = 0; i < g.size(); ++i) st.value[size_t(i)] = TensorT<T>(nodes[size_t(i)].shape);
  }
  st.kink_hash = 0;
  st.l2_guard_count = 0;
  st.nonfinite_node = -1;
  KinkHasher kh;

  size_t next_input = 0;
  for (int id = 0; id < g.size(); ++id) {
    const Node& n = nodes[size_t(id)];
    TensorT<T>& out = st.value[size_t(id)];
    auto in = [&](int slot) -> const TensorT<T>& { return st.value[size_t(n.in[size_t(slot)])]; };
    switch (n.op) {
      case Op::input: {
        const TensorT<T>* src = inputs[next_input++];
        if (!same_shape(src->shape, n.shape))
          throw std::invalid_argument("run_forward: input shape " + shape_str(src->shape) +
                                      " does not match declared " + shape_str(n.shape));
        out.data = src->data;
        break;
      }
      case Op::param: {
        const auto* e = params.find(n.name);
        if (!e) throw std::invalid_argument("run_forward: missing parameter " + n.name);
        if (!same_shape(e->value.shape, n.shape))
          throw std::invalid_argument("run_forward: parameter " + n.name + " shape mismatch");
        out.data = e->value.data;
        break;
      }
      case Op::constant: {
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(n.value[i]);
        break;
      }
      case Op::affine: {
        const auto& x = in(0); const auto& w = in(1); const auto& b = in(2);
        int N = x.shape[0], Di = x.shape[1], Do = w.shape[1];
        for (int i = 0; i < N; ++i) {
          T* yr = out.data.data() + int64_t(i) * Do;
          for (int j = 0; j < Do; ++j) yr[j] = b[j];
          const T* xr = x.data.data() + int64_t(i) * Di;
          for (int k = 0; k < Di; ++k) {
            T a = xr[k];
            const T* wr = w.data.data() + int64_t(k) * Do;
            for (int j = 0; j < Do; ++j) yr[j] += a * wr[j];
          }
        }
        break;
      }
      case Op::matmul_bt: {
        const auto& a = in(0); const auto& b = in(1);
        int N = a.shape[0], D = a.shape[1], M = b.shape[0];
        for (int i = 0; i < N; ++i) {
          const T* ar = a.data.data() + int64_t(i) * D;
          for (int m = 0; m < M; ++m) {
            const T* br = b.data.data() + int64_t(m) * D;
            T acc = T(0);
            for (int k = 0; k < D; ++k) acc += ar[k] * br[k];
            out[int64_t(i) * M + m] = acc;
          }
        }
        break;
      }
      case Op::conv2d:
        conv2d_forward(n, in(0), in(1), in(2), out);
        break;
      case Op::relu: {
        const auto& x = in(0);
        for (int64_t i = 0; i < x.numel(); ++i) {
          bool pos = x[i] > T(0);
          out[i] = pos ? x[i] : T(0);
          if (st.record_kinks) kh.push(pos);
        }
        break;
      }
      case Op::gap: {
        const auto& x = in(0);
        int N = x.shape[0], C = x.shape[1];
        int64_t hw = int64_t(x.shape[2]) * x.shape[3];
        for (int i = 0; i < N; ++i)
          for (int c = 0; c < C; ++c) {
            const T* xp = x.data.data() + (int64_t(i) * C + c) * hw;
            T acc = T(0);
            for (int64_t k = 0; k < hw; ++k) acc += xp[k];
            out[int64_t(i) * C + c] = acc / T(hw);
          }
        break;
      }
      case Op::l2norm: {
        const auto& x = in(0);
        int N = x.shape[0], D = x.shape[1];
        for (int i = 0; i < N; ++i) {
          const T* xr = x.data.data() + int64_t(i) * D;
          T* yr = out.data.data() + int64_t(i) * D;
          T ss = T(0);
          for (int j = 0; j < D; ++j) ss += xr[j] * xr[j];
          T norm = std::sqrt(ss);
          bool guard = !(norm > T(1e-6));
          if (guard) {
            for (int j = 0; j < D; ++j) yr[j] = T(0);
            yr[0] = T(1);
            ++st.l2_guard_count;
          } else {
            T inv = T(1) / norm;
            for (int j = 0; j < D; ++j) yr[j] = xr[j] * inv;
          }
          if (st.record_kinks) kh.push(guard);
        }
        break;
      }
      case Op::lse_rows: {
        const auto& x = in(0);
        int N = x.shape[0], M = x.shape[1];
        for (int i = 0; i < N; ++i) {
          const T* xr = x.data.data() + int64_t(i) * M;
          T m = xr[0];
          for (int j = 1; j < M; ++j) m = std::max(m, xr[j]);
          T s = T(0);
          for (int j = 0; j < M; ++j) s += std::exp(xr[j] - m);
          out[i] = m + std::log(s);
        }
        break;
      }
      case Op::add: {
        const auto& a = in(0); const auto& b = in(1);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
        break;
      }
      case Op::sub: {
        const auto& a = in(0); const auto& b = in(1);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
        break;
      }
      case Op::mul: {
        const auto& a = in(0); const auto& b = in(1);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
        break;
      }
      case Op::scale: {
        const auto& x = in(0);
        T c = T(n.c);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] * c;
        break;
      }
      case Op::row_sum: {
        const auto& x = in(0);
        int N = x.shape[0], M = x.shape[1];
        for (int i = 0; i < N; ++i) {
          const T* xr = x.data.data() + int64_t(i) * M;
          T acc = T(0);
          for (int j = 0; j < M; ++j) acc += xr[j];
          out[i] = acc;
        }
        break;
      }
      case Op::mean_all: {
        const auto& x = in(0);
        T acc = T(0);
        for (int64_t i = 0; i < x.numel(); ++i) acc += x[i];
        out[0] = acc / T(x.numel());
        break;
      }
      case Op::sum_all: {
        const auto& x = in(0);
        T acc = T(0);
        for (int64_t i = 0; i < x.numel(); ++i) acc += x[i];
        out[0] = acc;
        break;
      }
      case Op::concat_rows: {
        const auto& a = in(0); const auto& b = in(1);
        std::copy(a.data.begin(), a.data.end(), out.data.begin());
        std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.numel());
        break;
      }
      case Op::concat_cols: {
        const auto& a = in(0); const auto& b = in(1);
        int N = a.shape[0], Ma = a.shape[1], Mb = b.shape[1];
        for (int i = 0; i < N; ++i) {
          T* yr = out.data.data() + int64_t(i) * (Ma + Mb);
          std::copy_n(a.data.data() + int64_t(i) * Ma, Ma, yr);
          std::copy_n(b.data.data() + int64_t(i) * Mb, Mb, yr + Ma);
        }
        break;
      }
      case Op::slice_rows: {
        const auto& x = in(0);
        int64_t rs = x.numel() / x.shape[0];
        std::copy_n(x.data.data() + int64_t(n.begin) * rs, int64_t(n.count) * rs,
                    out.data.data());
        break;
      }
      case Op::reshape: {
        const auto& x = in(0);
        out.data = x.data;
        break;
      }
    }
    if (st.check_finite && !all_finite(out)) {
      st.nonfinite_node = id;
      throw std::runtime_error("non-finite value produced by node " + std::to_string(id) + " (" +
                               op_name(n.op) + ")");
    }
  }
  kh.flush();
  if (st.record_kinks) st.kink_hash = kh.h;
}

template <typename T>
void run_backward(const Graph& g, ParamSetT<T>& params, ExecState<T>& st) {
  const auto& nodes = g.nodes();
  int out_id = g.output();
  if (out_id < 0) throw std::invalid_argument("run_backward: no output set");
  if (numel_of(nodes[size_t(out_id)].shape) != 1)
    throw std::invalid_argument("run_backward: output must be scalar");
  if (int(st.value.size()) != g.size())
    throw std::invalid_argument("run_backward: run_forward first");
  if (int(st.adjoint.size()) != g.size()) {
    st.adjoint.assign(size_t(g.size()), {});
    for (int i = 0; i < g.size(); ++i) st.adjoint[size_t(i)] = TensorT<T>(nodes[size_t(i)].shape);
  } else {
    for (auto& t : st.adjoint) t.fill(T(0));
  }
  st.adjoint[size_t(out_id)][0] = T(1);

  for (int id = g.size() - 1; id >= 0; --id) {
    const Node& n = nodes[size_t(id)];
    const TensorT<T>& dy = st.adjoint[size_t(id)];
    auto val = [&](int slot) -> const TensorT<T>& { return st.value[size_t(n.in[size_t(slot)])]; };
    auto adj = [&](int slot) -> TensorT<T>& { return st.adjoint[size_t(n.in[size_t(slot)])]; };
    switch (n.op) {
      case Op::input:
      case Op::constant:
        break;
      case Op::param: {
        auto* e = params.find(n.name);
        for (int64_t i = 0; i < dy.numel(); ++i) e->grad[i] += dy[i];
        break;
      }
      case Op::affine: {
        const auto& x = val(0); const auto& w = val(1);
        auto& dx = adj(0); auto& dw = adj(1); auto& db = adj(2);
        int N = x.shape[0], Di = x.shape[1], Do = w.shape[1];
        for (int i = 0; i < N; ++i) {
          const T* dyr = dy.data.data() + int64_t(i) * Do;
          const T* xr = x.data.data() + int64_t(i) * Di;
          T* dxr = dx.data.data() + int64_t(i) * Di;
          for (int k = 0; k < Di; ++k) {
            const T* wr = w.data.data() + int64_t(k) * Do;
            T* dwr = dw.data.data() + int64_t(k) * Do;
            T acc = T(0);
            T a = xr[k];
            for (int j = 0; j < Do; ++j) {
              acc += dyr[j] * wr[j];
              dwr[j] += a * dyr[j];
            }
            dxr[k] += acc;
          }
          for (int j = 0; j < Do; ++j) db[j] += dyr[j];
        }
        break;
      }
      case Op::matmul_bt: {
        const auto& a = val(0); const auto& b = val(1);
        auto& da = adj(0); auto& db_ = adj(1);
        int N = a.shape[0], D = a.shape[1], M = b.shape[0];
        for (int i = 0; i < N; ++i) {
          const T* dyr = dy.data.data() + int64_t(i) * M;
          T* dar = da.data.data() + int64_t(i) * D;
          const T* ar = a.data.data() + int64_t(i) * D;
          for (int m = 0; m < M; ++m) {
            T s = dyr[m];
            if (s == T(0)) continue;
            const T* br = b.data.data() + int64_t(m) * D;
            T* dbr = db_.data.data() + int64_t(m) * D;
            for (int k = 0; k < D; ++k) {
              dar[k] += s * br[k];
              dbr[k] += s * ar[k];
            }
          }
        }
        break;
      }
      case Op::conv2d:
        conv2d_backward(n, val(0), val(1), dy, adj(0), adj(1), adj(2));
        break;
      case Op::relu: {
        const auto& x = val(0);
        auto& dx = adj(0);
        for (int64_t i = 0; i < x.numel(); ++i)
          if (x[i] > T(0)) dx[i] += dy[i];
        break;
      }
      case Op::gap: {
        const auto& x = val(0);
        auto& dx = adj(0);
        int N = x.shape[0], C = x.shape[1];
        int64_t hw = int64_t(x.shape[2]) * x.shape[3];
        for (int i = 0; i < N; ++i)
          for (int c = 0; c < C; ++c) {
            T s = dy[int64_t(i) * C + c] / T(hw);
            T* dxp = dx.data.data() + (int64_t(i) * C + c) * hw;
            for (int64_t k = 0; k < hw; ++k) dxp[k] += s;
          }
        break;
      }
      case Op::l2norm: {
        const auto& x = val(0);
        const auto& y = st.value[size_t(id)];
        auto& dx = adj(0);
        int N = x.shape[0], D = x.shape[1];
        for (int i = 0; i < N; ++i) {
          const T* xr = x.data.data() + int64_t(i) * D;
          T ss = T(0);
          for (int j = 0; j < D; ++j) ss += xr[j] * xr[j];
          T norm = std::sqrt(ss);
          if (!(norm > T(1e-6))) continue;  // guard rows carry no gradient
          const T* yr = y.data.data() + int64_t(i) * D;
          const T* dyr = dy.data.data() + int64_t(i) * D;
          T* dxr = dx.data.data() + int64_t(i) * D;
          T dot = T(0);
          for (int j = 0; j < D; ++j) dot += dyr[j] * yr[j];
          T inv = T(1) / norm;
          for (int j = 0; j < D; ++j) dxr[j] += (dyr[j] - dot * yr[j]) * inv;
        }
        break;
      }
      case Op::lse_rows: {
        const auto& x = val(0);
        const auto& y = st.value[size_t(id)];
        auto& dx = adj(0);
        int N = x.shape[0], M = x.shape[1];
        for (int i = 0; i < N; ++i) {
          T s = dy[i];
          if (s == T(0)) continue;
          const T* xr = x.data.data() + int64_t(i) * M;
          T* dxr = dx.data.data() + int64_t(i) * M;
          T lse = y[i];
          for (int j = 0; j < M; ++j) dxr[j] += s * std::exp(xr[j] - lse);
        }
        break;
      }
      case Op::add: {
        auto& da = adj(0); auto& db = adj(1);
        for (int64_t i = 0; i < dy.numel(); ++i) {
          da[i] += dy[i];
          db[i] += dy[i];
        }
        break;
      }
      case Op::sub: {
        auto& da = adj(0); auto& db = adj(1);
        for (int64_t i = 0; i < dy.numel(); ++i) {
          da[i] += dy[i];
          db[i] -= dy[i];
        }
        break;
      }
      case Op::mul: {
        const auto& a = val(0); const auto& b = val(1);
        auto& da = adj(0); auto& db = adj(1);
        for (int64_t i = 0; i < dy.numel(); ++i) {
          da[i] += dy[i] * b[i];
          db[i] += dy[i] * a[i];
        }
        break;
      }
      case Op::scale: {
        auto& dx = adj(0);
        T c = T(n.c);
        for (int64_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * c;
        break;
      }
      case Op::row_sum: {
        const auto& x = val(0);
        auto& dx = adj(0);
        int N = x.shape[0], M = x.shape[1];
        for (int i = 0; i < N; ++i) {
          T s = dy[i];
          T* dxr = dx.data.data() + int64_t(i) * M;
          for (int j = 0; j < M; ++j) dxr[j] += s;
        }
        break;
      }
      case Op::mean_all: {
        const auto& x = val(0);
        auto& dx = adj(0);
        T s = dy[0] / T(x.numel());
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += s;
        break;
      }
      case Op::sum_all: {
        auto& dx = adj(0);
        T s = dy[0];
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += s;
        break;
      }
      case Op::concat_rows: {
        auto& da = adj(0); auto& db = adj(1);
        for (int64_t i = 0; i < da.numel(); ++i) da[i] += dy[i];
        for (int64_t i = 0; i < db.numel(); ++i) db[i] += dy[da.numel() + i];
        break;
      }
      case Op::concat_cols: {
        auto& da = adj(0); auto& db = adj(1);
        int N = da.shape[0], Ma = da.shape[1], Mb = db.shape[1];
        for (int i = 0; i < N; ++i) {
          const T* dyr = dy.data.data() + int64_t(i) * (Ma + Mb);
          T* dar = da.data.data() + int64_t(i) * Ma;
          T* dbr = db.data.data() + int64_t(i) * Mb;
          for (int j = 0; j < Ma; ++j) dar[j] += dyr[j];
          for (int j = 0; j < Mb; ++j) dbr[j] += dyr[Ma + j];
        }
        break;
      }
      case Op::slice_rows: {
        auto& dx = adj(0);
        int64_t rs = dx.numel() / dx.shape[0];
        T* base = dx.data.data() + int64_t(n.begin) * rs;
        for (int64_t i = 0; i < dy.numel(); ++i) base[i] += dy[i];
        break;
      }
      case Op::reshape: {
        auto& dx = adj(0);
        for (int64_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i];
        break;
      }
    }
  }
}

template <typename T>
T forward_backward(const Graph& g, ParamSetT<T>& params,
                   const std::vector<const TensorT<T>*>& inputs) {
  ExecState<T> st;
  params.zero_grads();
  run_forward(g, params, inputs, st);
  run_backward(g, params, st);
  return st.value[size_t(g.output())][0];
}

template void run_forward<float>(const Graph&, const ParamSetT<float>&,
                                 const std::vector<const TensorT<float>*>&, ExecState<float>&);
template void run_forward<double>(const Graph&, const ParamSetT<double>&,
                                  const std::vector<const TensorT<double>*>&, ExecState<double>&);
template void run_backward<float>(const Graph&, ParamSetT<float>&, ExecState<float>&);
template void run_backward<double>(const Graph&, ParamSetT<double>&, ExecState<double>&);
template float forward_backward<float>(const Graph&, ParamSetT<float>&,
                                       const std::vector<const TensorT<float>*>&);
template double forward_backward<double>(const Graph&, ParamSetT<double>&,
                                         const std::vector<const TensorT<double>*>&);

}  // namespace mirig::diff
