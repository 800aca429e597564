#pragma once
#include <string>
#include <vector>

#include "mirig/tensor.hpp"

namespace mirig::diff {

enum class Op {
  input,
  param,
  constant,
  affine,      // x(N,Di), w(Di,Do), b(Do) -> x*w + b
  matmul_bt,   // a(N,D), b(M,D) -> a*b^T  (N,M)
  conv2d,      // x(N,Ci,H,W), w(Co,Ci,k,k), b(Co); stride 1|2, zero pad (k-1)/2
  relu,
  gap,         // (N,C,H,W) -> (N,C) spatial mean
  l2norm,      // (N,D) -> unit rows; near-zero rows mapped to e1 with zero grad
  lse_rows,    // (N,M) -> (N) row log-sum-exp, max-subtracted
  add,
  sub,
  mul,
  scale,       // x * c
  row_sum,     // (N,M) -> (N)
  mean_all,    // any -> (1)
  sum_all,     // any -> (1)
  concat_rows, // along axis 0
  concat_cols, // (N,M1)+(N,M2) -> (N,M1+M2)
  slice_rows,  // rows [begin, begin+count)
  reshape,
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<int> in;
  std::vector<int> shape;
  int stride = 1;             // conv2d
  double c = 0.0;             // scale
  int begin = 0, count = 0;   // slice_rows
  std::string name;           // param
  Tensor value;               // constant payload
};

// Static DAG builder.  Nodes are appended in topological order by
// construction; shapes are inferred and validated eagerly so that shape bugs
// surface at graph-build time, not mid-training.
class Graph {
 public:
  int input(std::vector<int> shape);
  int param(std::string name, std::vector<int> shape);
  int constant(Tensor t);
  int affine(int x, int w, int b);
  int matmul_bt(int a, int b);
  int conv2d(int x, int w, int b, int stride);
  int relu(int x);
  int gap(int x);
  int l2norm(int x);
  int lse_rows(int x);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int x, double c);
  int row_sum(int x);
  int mean_all(int x);
  int sum_all(int x);
  int concat_rows(int a, int b);
  int concat_cols(int a, int b);
  int slice_rows(int x, int begin, int count);
  int reshape(int x, std::vector<int> shape);

  void set_output(int id);
  int output() const { return output_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int id) const { return nodes_.at(size_t(id)); }
  const std::vector<int>& input_ids() const { return input_ids_; }
  int size() const { return int(nodes_.size()); }

 private:
  int push(Node n);
  const Node& chk(int id, const char* who) const;

  std::vector<Node> nodes_;
  std::vector<int> input_ids_;
  int output_ = -1;
};

// Named parameter collection with matching gradient buffers.
template <typename T>
struct ParamSetT {
  struct Entry {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;
  };
  std::vector<Entry> entries;
  uint64_t rng_seed = 0;

  TensorT<T>& add(const std::string& name, std::vector<int> shape) {
    for (auto& e : entries)
      if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    entries.push_back({name, TensorT<T>(shape), TensorT<T>(shape)});
    return entries.back().value;
  }
  Entry* find(const std::string& name) {
    for (auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
  const Entry* find(const std::string& name) const {
    for (auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
  void zero_grads() {
    for (auto& e : entries) e.grad.fill(T(0));
  }
  int64_t total_params() const {
    int64_t n = 0;
    for (auto& e : entries) n += e.value.numel();
    return n;
  }
  template <typename U>
  ParamSetT<U> cast() const {
    ParamSetT<U> out;
    out.rng_seed = rng_seed;
    for (auto& e : entries)
      out.entries.push_back({e.name, e.value.template cast<U>(), e.grad.template cast<U>()});
    return out;
  }
};

using ParamSet = ParamSetT<float>;

// Per-run buffers; reusable across calls to avoid reallocation in hot loops.
template <typename T>
struct ExecState {
  std::vector<TensorT<T>> value;
  std::vector<TensorT<T>> adjoint;
  bool record_kinks = false;   // hash relu sign patterns + l2norm guards
  bool check_finite = false;   // scan node outputs, report first offender
  uint64_t kink_hash = 0;
  int l2_guard_count = 0;
  int nonfinite_node = -1;
};

template <typename T>
void run_forward(const Graph& g, const ParamSetT<T>& params,
                 const std::vector<const TensorT<T>*>& inputs, ExecState<T>& st);

// Seeds d(output)=1 (output must be scalar) and accumulates parameter
// gradients into params.grad.  run_forward must have been called on st.
template <typename T>
void run_backward(const Graph& g, ParamSetT<T>& params, ExecState<T>& st);

// Convenience wrapper: zeroes grads, runs both passes, returns the scalar
// output.  Gradients land in params.grad.
template <typename T>
T forward_backward(const Graph& g, ParamSetT<T>& params,
                   const std::vector<const TensorT<T>*>& inputs);

struct GradCheckOptions {
  double step = 1e-3;
  int max_samples = 200;   // parameter coordinates probed per call
  uint64_t seed = 0x6D1F;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int samples = 0;
  int skipped_nondiff = 0;  // finite-difference probes that crossed a relu kink
  std::string worst;        // "param[idx]" of the worst coordinate
};

// Central-difference check of the analytic gradient, run entirely in double.
// Probes that change the relu/normalization activation pattern are skipped
// (the loss is non-differentiable there).
GradCheckReport grad_check(const Graph& g, const ParamSet& params,
                           const std::vector<const Tensor*>& inputs,
                           const GradCheckOptions& opt = {});

}  // namespace mirig::diff
