#include "mirig/graph.hpp"

#include <stdexcept>

namespace mirig::diff {

const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::param: return "param";
    case Op::constant: return "constant";
    case Op::affine: return "affine";
    case Op::matmul_bt: return "matmul_bt";
    case Op::conv2d: return "conv2d";
    case Op::relu: return "relu";
    case Op::gap: return "gap";
    case Op::l2norm: return "l2norm";
    case Op::lse_rows: return "lse_rows";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::row_sum: return "row_sum";
    case Op::mean_all: return "mean_all";
    case Op::sum_all: return "sum_all";
    case Op::concat_rows: return "concat_rows";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_rows: return "slice_rows";
    case Op::reshape: return "reshape";
  }
  return "?";
}

static void fail(const char* who, const std::string& msg) {
  throw std::invalid_argument(std::string(who) + ": " + msg);
}

const Node& Graph::chk(int id, const char* who) const {
  if (id < 0 || id >= size()) fail(who, "node id out of range");
  return nodes_[size_t(id)];
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Graph::input(std::vector<int> shape) {
  numel_of(shape);
  int id = push({Op::input, {}, std::move(shape), 1, 0.0, 0, 0, "", {}});
  input_ids_.push_back(id);
  return id;
}

int Graph::param(std::string name, std::vector<int> shape) {
  numel_of(shape);
  if (name.empty()) fail("param", "empty name");
  return push({Op::param, {}, std::move(shape), 1, 0.0, 0, 0, std::move(name), {}});
}

int Graph::constant(Tensor t) {
  std::vector<int> shape = t.shape;
  return push({Op::constant, {}, std::move(shape), 1, 0.0, 0, 0, "", std::move(t)});
}

int Graph::affine(int x, int w, int b) {
  const Node& nx = chk(x, "affine");
  const Node& nw = chk(w, "affine");
  const Node& nb = chk(b, "affine");
  if (nx.shape.size() != 2 || nw.shape.size() != 2 || nb.shape.size() != 1)
    fail("affine", "expected x(N,Di), w(Di,Do), b(Do)");
  if (nx.shape[1] != nw.shape[0] || nw.shape[1] != nb.shape[0])
    fail("affine", "shape mismatch " + shape_str(nx.shape) + " * " + shape_str(nw.shape) +
                       " + " + shape_str(nb.shape));
  return push({Op::affine, {x, w, b}, {nx.shape[0], nw.shape[1]}, 1, 0.0, 0, 0, "", {}});
}

int Graph::matmul_bt(int a, int b) {
  const Node& na = chk(a, "matmul_bt");
  const Node& nb = chk(b, "matmul_bt");
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[1])
    fail("matmul_bt", "expected a(N,D), b(M,D); got " + shape_str(na.shape) + ", " +
                          shape_str(nb.shape));
  return push({Op::matmul_bt, {a, b}, {na.shape[0], nb.shape[0]}, 1, 0.0, 0, 0, "", {}});
}

int Graph::conv2d(int x, int w, int b, int stride) {
  const Node& nx = chk(x, "conv2d");
  const Node& nw = chk(w, "conv2d");
  const Node& nb = chk(b, "conv2d");
  if (nx.shape.size() != 4 || nw.shape.size() != 4 || nb.shape.size() != 1)
    fail("conv2d", "expected x(N,Ci,H,W), w(Co,Ci,k,k), b(Co)");
  int ci = nx.shape[1], k = nw.shape[2];
  if (nw.shape[1] != ci || nw.shape[3] != k) fail("conv2d", "weight shape mismatch");
  if (nb.shape[0] != nw.shape[0]) fail("conv2d", "bias shape mismatch");
  if (k % 2 == 0) fail("conv2d", "kernel must be odd");
  if (stride != 1 && stride != 2) fail("conv2d", "stride must be 1 or 2");
  int p = (k - 1) / 2;
  int ho = (nx.shape[2] + 2 * p - k) / stride + 1;
  int wo = (nx.shape[3] + 2 * p - k) / stride + 1;
  if (ho <= 0 || wo <= 0) fail("conv2d", "output would be empty");
  return push({Op::conv2d, {x, w, b}, {nx.shape[0], nw.shape[0], ho, wo}, stride, 0.0, 0, 0, "", {}});
}

int Graph::relu(int x) {
  const Node& nx = chk(x, "relu");
  return push({Op::relu, {x}, nx.shape, 1, 0.0, 0, 0, "", {}});
}

int Graph::gap(int x) {
  const Node& nx = chk(x, "gap");
  if (nx.shape.size() != 4) fail("gap", "expected rank-4 input");
  return push({Op::gap, {x}, {nx.shape[0], nx.shape[1]}, 1, 0.0, 0, 0, "", {}});
}

int Graph::l2norm(int x) {
  const Node& nx = chk(x, "l2norm");
  if (nx.shape.size() != 2) fail("l2norm", "expected rank-2 input");
  return push({Op::l2norm, {x}, nx.shape, 1, 0.0, 0, 0, "", {}});
}

int Graph::lse_rows(int x) {
  const Node& nx = chk(x, "lse_rows");
  if (nx.shape.size() != 2) fail("lse_rows", "expected rank-2 input");
  return push({Op::lse_rows, {x}, {nx.shape[0]}, 1, 0.0, 0, 0, "", {}});
}

static int binary_same_shape(Graph& g, Op op, int a, int b, const Node& na, const Node& nb) {
  (void)g;
  if (!same_shape(na.shape, nb.shape))
    fail(op_name(op), "shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  (void)a; (void)b;
  return 0;
}

int Graph::add(int a, int b) {
  const Node& na = chk(a, "add");
  const Node& nb = chk(b, "add");
  binary_same_shape(*this, Op::add, a, b, na, nb);
  return push({Op::add, {a, b}, na.shape, 1, 0.0, 0, 0, "", {}});
}

int Graph::sub(int a, int b) {
  const Node& na = chk(a, "sub");
  const Node& nb = chk(b, "sub");
  binary_same_shape(*this, Op::sub, a, b, na, nb);
  return push({Op::sub, {a, b}, na.shape, 1, 0.0, 0, 0, "", {}});
}

int Graph::mul(int a, int b) {
  const Node& na = chk(a, "mul");
  const Node& nb = chk(b, "mul");
  binary_same_shape(*this, Op::mul, a, b, na, nb);
  return push({Op::mul, {a, b}, na.shape, 1, 0.0, 0, 0, "", {}});
}

int Graph::scale(int x, double c) {
  const Node& nx = chk(x, "scale");
  return push({Op::scale, {x}, nx.shape, 1, c, 0, 0, "", {}});
}

int Graph::row_sum(int x) {
  const Node& nx = chk(x, "row_sum");
  if (nx.shape.size() != 2) fail("row_sum", "expected rank-2 input");
  return push({Op::row_sum, {x}, {nx.shape[0]}, 1, 0.0, 0, 0, "", {}});
}

int Graph::mean_all(int x) {
  chk(x, "mean_all");
  return push({Op::mean_all, {x}, {1}, 1, 0.0, 0, 0, "", {}});
}

int Graph::sum_all(int x) {
  chk(x, "sum_all");
  return push({Op::sum_all, {x}, {1}, 1, 0.0, 0, 0, "", {}});
}

int Graph::concat_rows(int a, int b) {
  const Node& na = chk(a, "concat_rows");
  const Node& nb = chk(b, "concat_rows");
  if (na.shape.size() != nb.shape.size() || na.shape.empty())
    fail("concat_rows", "rank mismatch");
  for (size_t i = 1; i < na.shape.size(); ++i)
    if (na.shape[i] != nb.shape[i]) fail("concat_rows", "trailing dims differ");
  std::vector<int> shape = na.shape;
  shape[0] += nb.shape[0];
  return push({Op::concat_rows, {a, b}, std::move(shape), 1, 0.0, 0, 0, "", {}});
}

int Graph::concat_cols(int a, int b) {
  const Node& na = chk(a, "concat_cols");
  const Node& nb = chk(b, "concat_cols");
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[0] != nb.shape[0])
    fail("concat_cols", "expected rank-2 with equal row counts");
  return push({Op::concat_cols, {a, b}, {na.shape[0], na.shape[1] + nb.shape[1]}, 1, 0.0, 0, 0, "", {}});
}

int Graph::slice_rows(int x, int begin, int count) {
  const Node& nx = chk(x, "slice_rows");
  if (nx.shape.empty()) fail("slice_rows", "scalar input");
  if (begin < 0 || count < 1 || begin + count > nx.shape[0])
    fail("slice_rows", "range [" + std::to_string(begin) + "," +
                           std::to_string(begin + count) + ") out of bounds for " +
                           shape_str(nx.shape));
  std::vector<int> shape = nx.shape;
  shape[0] = count;
  return push({Op::slice_rows, {x}, std::move(shape), 1, 0.0, begin, count, "", {}});
}

int Graph::reshape(int x, std::vector<int> shape) {
  const Node& nx = chk(x, "reshape");
  if (numel_of(shape) != numel_of(nx.shape))
    fail("reshape", "element count mismatch " + shape_str(nx.shape) + " -> " + shape_str(shape));
  return push({Op::reshape, {x}, std::move(shape), 1, 0.0, 0, 0, "", {}});
}

void Graph::set_output(int id) {
  chk(id, "set_output");
  output_ = id;
}

}  // namespace mirig::diff
