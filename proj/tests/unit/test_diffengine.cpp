#include <doctest.h>

#include <cmath>

#include "../common/op_cases.hpp"
#include "mirig/graph.hpp"
#include "mirig/optimizer.hpp"
#include "mirig/rng.hpp"

using namespace mirig;
using namespace mirig::diff;

TEST_CASE("identity affine: dL/dx is all ones when loss sums the output") {
  Graph g;
  int x = g.param("x", {1, 3});
  int w = g.param("w", {3, 3});
  int b = g.param("b", {3});
  g.set_output(g.sum_all(g.affine(x, w, b)));

  ParamSet ps;
  ps.add("x", {1, 3}).data = {0.3f, -0.7f, 2.0f};
  auto& wv = ps.add("w", {3, 3});
  for (int i = 0; i < 3; ++i) wv[i * 3 + i] = 1.0f;
  ps.add("b", {3});

  float loss = forward_backward(g, ps, {});
  CHECK(loss == doctest::Approx(0.3 - 0.7 + 2.0));
  for (int i = 0; i < 3; ++i) CHECK(ps.find("x")->grad[i] == doctest::Approx(1.0));
}

TEST_CASE("two-layer mlp gradients match central differences (seed 7)") {
  Rng rng(7);
  Graph g;
  int x = g.param("x", {4, 5});
  int w1 = g.param("w1", {5, 8});
  int b1 = g.param("b1", {8});
  int w2 = g.param("w2", {8, 3});
  int b2 = g.param("b2", {3});
  int h = g.relu(g.affine(x, w1, b1));
  g.set_output(g.mean_all(g.affine(h, w2, b2)));

  ParamSet ps;
  for (auto& [name, shape] : std::vector<std::pair<std::string, std::vector<int>>>{
           {"x", {4, 5}}, {"w1", {5, 8}}, {"b1", {8}}, {"w2", {8, 3}}, {"b2", {3}}}) {
    auto& t = ps.add(name, shape);
    for (auto& v : t.data) v = float(rng.uniform(-1.0, 1.0));
  }
  auto rep = grad_check(g, ps, {});
  CHECK(rep.samples > 50);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("relu at exactly zero is skipped by kink detection") {
  Graph g;
  int x = g.param("x", {1, 1});
  g.set_output(g.sum_all(g.relu(x)));
  ParamSet ps;
  ps.add("x", {1, 1})[0] = 0.0f;
  auto rep = grad_check(g, ps, {});
  CHECK(rep.skipped_nondiff == 1);
  CHECK(rep.samples == 0);
}

TEST_CASE("per-op gradient spot checks") {
  Rng rng(1234);
  for (const auto& name : mirig::testing::op_case_names()) {
    CAPTURE(name);
    for (int inst = 0; inst < 5; ++inst) {
      auto c = mirig::testing::make_op_case(name, rng);
      auto rep = grad_check(c.g, c.params, c.input_ptrs(), {.step = 1e-4});
      CAPTURE(inst);
      CAPTURE(rep.worst);
      CHECK(rep.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("l2norm guards near-zero rows: unit basis output, no gradient") {
  Graph g;
  int x = g.param("x", {2, 3});
  int y = g.l2norm(x);
  g.set_output(g.sum_all(y));
  ParamSet ps;
  auto& xv = ps.add("x", {2, 3});
  xv.data = {3.0f, 4.0f, 0.0f, 0.0f, 0.0f, 0.0f};  // second row triggers the guard

  ExecState<float> st;
  ps.zero_grads();
  run_forward(g, ps, {}, st);
  run_backward(g, ps, st);
  const auto& yv = st.value[size_t(y)];
  CHECK(yv[0] == doctest::Approx(0.6));
  CHECK(yv[1] == doctest::Approx(0.8));
  CHECK(yv[3] == 1.0f);
  CHECK(yv[4] == 0.0f);
  CHECK(yv[5] == 0.0f);
  CHECK(st.l2_guard_count == 1);
  for (int j = 3; j < 6; ++j) CHECK(ps.find("x")->grad[j] == 0.0f);
}

TEST_CASE("lse_rows is overflow-safe") {
  Graph g;
  int x = g.param("x", {1, 3});
  g.set_output(g.sum_all(g.lse_rows(x)));
  ParamSet ps;
  ps.add("x", {1, 3}).data = {1000.0f, 999.0f, -1000.0f};
  ExecState<float> st;
  run_forward(g, ps, {}, st);
  float v = st.value[size_t(g.output())][0];
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(1000.0 + std::log(1.0 + std::exp(-1.0))));
}

TEST_CASE("shape mismatches are rejected at build time") {
  Graph g;
  int a = g.param("a", {2, 3});
  int b = g.param("b", {3, 2});
  CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(g.matmul_bt(a, g.param("c", {2, 4})), std::invalid_argument);
  CHECK_THROWS_AS(g.slice_rows(a, 1, 5), std::invalid_argument);
  CHECK_THROWS_AS(g.reshape(a, {7}), std::invalid_argument);
  Graph g2;
  int x = g2.param("x", {1, 2, 4, 4});
  int w = g2.param("w", {3, 2, 2, 2});  // even kernel
  int bias = g2.param("bb", {3});
  CHECK_THROWS_AS(g2.conv2d(x, w, bias, 1), std::invalid_argument);
}

TEST_CASE("backward on a non-scalar output is rejected") {
  Graph g;
  int x = g.param("x", {2, 2});
  g.set_output(g.relu(x));
  ParamSet ps;
  ps.add("x", {2, 2});
  ExecState<float> st;
  run_forward(g, ps, {}, st);
  CHECK_THROWS_AS(run_backward(g, ps, st), std::invalid_argument);
}

TEST_CASE("sgd with lr=1 subtracts the gradient exactly") {
  ParamSet ps;
  auto& p = ps.add("p", {3});
  p.data = {1.0f, 2.0f, 3.0f};
  ps.find("p")->grad.data = {0.5f, -1.0f, 0.25f};
  Optimizer opt({OptConfig::Algo::sgd, 1.0});
  opt.step(ps);
  CHECK(p.data[0] == 0.5f);
  CHECK(p.data[1] == 3.0f);
  CHECK(p.data[2] == 2.75f);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  ParamSet ps;
  auto& p = ps.add("p", {4});
  p.data = {1.0f, -2.0f, 0.5f, 100.0f};
  std::vector<float> before = p.data;
  Optimizer opt({});
  for (int i = 0; i < 3; ++i) {
    ps.zero_grads();
    opt.step(ps);
  }
  CHECK(p.data == before);
}

TEST_CASE("adam two-step update matches the hand-unrolled recurrence") {
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double g1 = 0.3, g2 = -0.2, p0 = 1.5;

  double m = 0, v = 0, p = p0;
  for (int t = 1; t <= 2; ++t) {
    double grad = t == 1 ? g1 : g2;
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    double mh = m / (1 - std::pow(b1, t));
    double vh = v / (1 - std::pow(b2, t));
    p -= lr * mh / (std::sqrt(vh) + eps);
  }

  ParamSet ps;
  ps.add("p", {1})[0] = float(p0);
  Optimizer opt({});
  ps.find("p")->grad[0] = float(g1);
  opt.step(ps);
  ps.find("p")->grad[0] = float(g2);
  opt.step(ps);
  CHECK(double(ps.find("p")->value[0]) == doctest::Approx(p).epsilon(1e-6));
}

TEST_CASE("non-finite gradient rejects the step and names the parameter") {
  ParamSet ps;
  auto& p = ps.add("enc.w", {2});
  p.data = {1.0f, 2.0f};
  ps.find("enc.w")->grad.data = {0.1f, std::numeric_limits<float>::quiet_NaN()};
  Optimizer opt({});
  try {
    opt.step(ps);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
  }
  CHECK(p.data[0] == 1.0f);  // untouched
}

TEST_CASE("forward_backward is bitwise deterministic") {
  auto run = [] {
    Rng rng(99);
    auto c = mirig::testing::make_op_case("conv2d_s2", rng);
    forward_backward(c.g, c.params, c.input_ptrs());
    uint64_t h = 0xCBF29CE484222325ull;
    for (auto& e : c.params.entries)
      h = fnv1a64(e.grad.data.data(), e.grad.data.size() * sizeof(float), h);
    return h;
  };
  CHECK(run() == run());
}
