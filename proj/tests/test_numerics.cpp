#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "icl/adam.hpp"
#include "icl/gradcheck.hpp"
#include "icl/graph.hpp"
#include "icl/rng.hpp"
#include "icl/tensor.hpp"

using namespace icl;
using namespace icl::numerics;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : data) v = nd(rng);
  return Tensor::from(std::move(shape), std::move(data));
}

// Independent oracle: naive triple-loop matrix product.
std::vector<double> matmul_oracle(const Tensor& a, const Tensor& b) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(static_cast<size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t l = 0; l < k; ++l)
        c[i * n + j] += a(i, l) * b(l, j);
  return c;
}

// Wraps a subgraph into a scalar loss: sum of outputs weighted by a fixed
// pseudo-random input tensor, so every output element affects the loss.
NodeId weighted_sum(Graph& g, NodeId out, Rng& rng) {
  const Tensor& v = g.value(out);
  NodeId w = g.input(random_tensor(v.shape(), rng));
  return g.reduce_sum(g.mul(out, w));
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1.0, 2.0}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), NonFiniteError);
  CHECK_THROWS_AS(Tensor::from({1}, {INFINITY}), NonFiniteError);
  Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(t.size() == 4);
  CHECK(t(1, 0) == 3.0);
  CHECK(t.reshaped({4}).dim(0) == 4);
  CHECK_THROWS_AS(t.reshaped({3}), DimensionError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  // rank-0: product of empty shape is 1
  CHECK(Tensor::zeros({}).size() == 1);
}

TEST_CASE("matmul identity is exact") {
  Graph g;
  NodeId eye = g.input(Tensor::from({2, 2}, {1, 0, 0, 1}));
  NodeId a = g.input(Tensor::from({2, 2}, {5, 6, 7, 8}));
  CHECK(g.value(g.matmul(eye, a)).equals(g.value(a)));
  CHECK(g.value(g.matmul(a, eye)).equals(g.value(a)));
}

TEST_CASE("matmul hand arithmetic") {
  Graph g;
  NodeId a = g.input(Tensor::from({2, 2}, {1, 2, 3, 4}));
  NodeId b = g.input(Tensor::from({2, 1}, {1, 1}));
  const Tensor& c = g.value(g.matmul(a, b));
  CHECK(c(0, 0) == 3.0);
  CHECK(c(1, 0) == 7.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng = make_rng(101);
  Tensor a = random_tensor({7, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  Graph g;
  const Tensor& c = g.value(g.matmul(g.input(a), g.input(b)));
  auto expect = matmul_oracle(a, b);
  for (std::int64_t i = 0; i < c.size(); ++i) {
    CHECK(c.at(i) == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul shape mismatch") {
  Graph g;
  NodeId a = g.input(Tensor::zeros({2, 3}));
  NodeId b = g.input(Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(g.matmul(a, b), DimensionError);
  CHECK_NOTHROW(g.matmul(a, b, false, true));
}

TEST_CASE("backward x*x") {
  Graph g;
  NodeId x = g.parameter(Tensor::scalar(3.0));
  NodeId y = g.mul(x, x);
  auto grads = g.backward(y);
  CHECK(grads.at(x).item() == doctest::Approx(6.0));
}

TEST_CASE("backward of sum-of-softmax vanishes") {
  // softmax rows sum to 1 identically, so the analytic gradient is the
  // zero vector; numerically the row sums are 1 up to one ulp.
  Rng rng = make_rng(7);
  Graph g;
  NodeId x = g.parameter(random_tensor({3, 5}, rng));
  NodeId loss = g.reduce_sum(g.softmax(x));
  auto grads = g.backward(loss);
  for (std::int64_t i = 0; i < grads.at(x).size(); ++i) {
    CHECK(std::abs(grads.at(x).at(i)) <= 1e-15);
  }
}

TEST_CASE("backward requires scalar loss") {
  Graph g;
  NodeId x = g.parameter(Tensor::from({2}, {1, 2}));
  NodeId y = g.mul(x, x);
  CHECK_THROWS_AS(g.backward(y), ContractError);
}

TEST_CASE("non-parameter leaves get no gradient") {
  Graph g;
  NodeId x = g.parameter(Tensor::scalar(2.0));
  NodeId c = g.input(Tensor::scalar(4.0));
  auto grads = g.backward(g.mul(x, c));
  CHECK(grads.size() == 1);
  CHECK(grads.count(x) == 1);
  CHECK(grads.count(c) == 0);
}

TEST_CASE("unreached parameters get zero gradients") {
  Graph g;
  NodeId x = g.parameter(Tensor::scalar(2.0));
  NodeId unused = g.parameter(Tensor::from({3}, {1, 2, 3}));
  auto grads = g.backward(g.mul(x, x));
  CHECK(grads.at(unused).size() == 3);
  for (std::int64_t i = 0; i < 3; ++i) CHECK(grads.at(unused).at(i) == 0.0);
}

TEST_CASE("backward of independent subgraphs equals per-subgraph gradients") {
  Rng rng = make_rng(55);
  Tensor xa = random_tensor({4}, rng);
  Tensor xb = random_tensor({6}, rng);

  Graph joint;
  NodeId a = joint.parameter(xa);
  NodeId b = joint.parameter(xb);
  NodeId la = joint.reduce_sum(joint.gelu(joint.mul(a, a)));
  NodeId lb = joint.reduce_mean(joint.mul(b, b));
  auto gj = joint.backward(joint.add(la, lb));

  Graph only_a;
  NodeId a2 = only_a.parameter(xa);
  auto ga = only_a.backward(only_a.reduce_sum(only_a.gelu(only_a.mul(a2, a2))));
  Graph only_b;
  NodeId b2 = only_b.parameter(xb);
  auto gb = only_b.backward(only_b.reduce_mean(only_b.mul(b2, b2)));

  CHECK(gj.at(a).equals(ga.at(a2)));
  CHECK(gj.at(b).equals(gb.at(b2)));
}

TEST_CASE("every primitive op matches central finite differences") {
  Rng rng = make_rng(2024);
  const double h = 1e-5;
  const double tol = 1e-4;

  auto check_op = [&](const char* name, Shape pshape,
                      std::function<NodeId(Graph&, NodeId)> apply) {
    CAPTURE(name);
    Rng wrng = make_rng(derive_seed(99, name));
    Tensor p0 = random_tensor(pshape, rng);
    auto build = [&](Graph& g, std::span<const NodeId> ps) {
      return weighted_sum(g, apply(g, ps[0]), wrng);
    };
    // rebuild weights identically on every call: reseed per evaluation
    auto build_stable = [&, name](Graph& g, std::span<const NodeId> ps) {
      Rng local = make_rng(derive_seed(99, name));
      return weighted_sum(g, apply(g, ps[0]), local);
    };
    (void)build;
    std::vector<Tensor> params{p0};
    double err = finite_diff_check(build_stable, params, h);
    CHECK_MESSAGE(err < tol, name << " max rel err " << err);
  };

  check_op("gelu", {3, 4}, [](Graph& g, NodeId x) { return g.gelu(x); });
  check_op("softmax", {3, 5}, [](Graph& g, NodeId x) { return g.softmax(x); });
  check_op("causal_softmax", {2, 4, 4},
           [](Graph& g, NodeId x) { return g.causal_softmax(x); });
  check_op("scale", {4}, [](Graph& g, NodeId x) { return g.scale(x, -2.5); });
  check_op("reshape", {2, 6},
           [](Graph& g, NodeId x) { return g.reshape(x, {3, 4}); });
  check_op("permute", {2, 3, 4, 2}, [](Graph& g, NodeId x) {
    return g.permute(x, {0, 2, 1, 3});
  });
  check_op("slice_cols", {3, 6},
           [](Graph& g, NodeId x) { return g.slice_cols(x, 1, 3); });
  check_op("slice_rows", {5, 3},
           [](Graph& g, NodeId x) { return g.slice_rows(x, 2, 2); });
  check_op("reduce_sum", {3, 3},
           [](Graph& g, NodeId x) { return g.reduce_sum(x); });
  check_op("reduce_mean", {3, 3},
           [](Graph& g, NodeId x) { return g.reduce_mean(x); });
  check_op("mul_self", {4}, [](Graph& g, NodeId x) { return g.mul(x, x); });

  // binary ops: perturb both operands via a single parameter split in two
  Rng crng = make_rng(31337);
  auto check_binary = [&](const char* name, Shape ashape, Shape bshape,
                          std::function<NodeId(Graph&, NodeId, NodeId)> apply) {
    CAPTURE(name);
    Tensor a0 = random_tensor(ashape, crng);
    Tensor b0 = random_tensor(bshape, crng);
    auto build = [&, name](Graph& g, std::span<const NodeId> ps) {
      Rng local = make_rng(derive_seed(17, name));
      return weighted_sum(g, apply(g, ps[0], ps[1]), local);
    };
    std::vector<Tensor> params{a0, b0};
    double err = finite_diff_check(build, params, h);
    CHECK_MESSAGE(err < tol, name << " max rel err " << err);
  };

  check_binary("add", {3, 4}, {3, 4},
               [](Graph& g, NodeId a, NodeId b) { return g.add(a, b); });
  check_binary("add_bias", {3, 4}, {4},
               [](Graph& g, NodeId a, NodeId b) { return g.add(a, b); });
  check_binary("add_tiled", {6, 4}, {2, 4},
               [](Graph& g, NodeId a, NodeId b) { return g.add_tiled(a, b); });
  check_binary("sub", {2, 5}, {2, 5},
               [](Graph& g, NodeId a, NodeId b) { return g.sub(a, b); });
  check_binary("mul", {2, 5}, {2, 5},
               [](Graph& g, NodeId a, NodeId b) { return g.mul(a, b); });
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
      Shape sb = tb ? Shape{5, 4} : Shape{4, 5};
      check_binary("matmul", sa, sb, [=](Graph& g, NodeId a, NodeId b) {
        return g.matmul(a, b, ta, tb);
      });
      Shape ba = ta ? Shape{2, 4, 3} : Shape{2, 3, 4};
      Shape bb = tb ? Shape{2, 5, 4} : Shape{2, 4, 5};
      check_binary("batch_matmul", ba, bb, [=](Graph& g, NodeId a, NodeId b) {
        return g.batch_matmul(a, b, ta, tb);
      });
    }
  }

  // layer_norm: three parameters
  {
    Tensor x0 = random_tensor({4, 6}, crng);
    Tensor g0 = random_tensor({6}, crng);
    Tensor b0 = random_tensor({6}, crng);
    auto build = [](Graph& g, std::span<const NodeId> ps) {
      Rng local = make_rng(derive_seed(17, "layer_norm"));
      return weighted_sum(g, g.layer_norm(ps[0], ps[1], ps[2]), local);
    };
    std::vector<Tensor> params{x0, g0, b0};
    double err = finite_diff_check(build, params, h);
    CHECK_MESSAGE(err < tol, "layer_norm max rel err " << err);
  }
}

TEST_CASE("backward of a 2-layer MLP with gelu and layer-norm matches FD") {
  Rng rng = make_rng(4242);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w1 = random_tensor({4, 8}, rng, 0.5);
  Tensor b1 = random_tensor({8}, rng, 0.1);
  Tensor gm = random_tensor({8}, rng, 0.3);
  Tensor bt = random_tensor({8}, rng, 0.3);
  Tensor w2 = random_tensor({8, 2}, rng, 0.5);

  auto build = [&](Graph& g, std::span<const NodeId> ps) {
    NodeId xin = g.input(x);
    NodeId h1 = g.gelu(g.add(g.matmul(xin, ps[0]), ps[1]));
    NodeId h2 = g.layer_norm(h1, ps[2], ps[3]);
    NodeId out = g.matmul(h2, ps[4]);
    return g.reduce_mean(g.mul(out, out));
  };
  std::vector<Tensor> params{w1, b1, gm, bt, w2};
  CHECK(finite_diff_check(build, params, 1e-5) < 1e-4);
}

TEST_CASE("finite_diff_check on quadratic and linear functions") {
  Rng rng = make_rng(9);
  Tensor x = random_tensor({6}, rng);
  auto quad = [](Graph& g, std::span<const NodeId> ps) {
    return g.scale(g.reduce_sum(g.mul(ps[0], ps[0])), 0.5);
  };
  std::vector<Tensor> params{x};
  CHECK(finite_diff_check(quad, params, 1e-5) < 1e-8);

  Tensor w = random_tensor({6}, rng);
  auto lin = [&](Graph& g, std::span<const NodeId> ps) {
    return g.reduce_sum(g.mul(ps[0], g.input(w)));
  };
  CHECK(finite_diff_check(lin, params, 1e-5) < 1e-10);
  CHECK_THROWS_AS(finite_diff_check(lin, params, 0.0), ContractError);
}

TEST_CASE("adam zero gradients is a fixed point") {
  std::vector<Tensor> params{Tensor::from({2, 2}, {1, 2, 3, 4}),
                             Tensor::from({3}, {-1, 0, 1})};
  std::vector<Tensor> grads{Tensor::zeros({2, 2}), Tensor::zeros({3})};
  AdamState st = AdamState::init(params, 0.1);
  auto next = adam_step(params, grads, st);
  CHECK(st.step == 1);
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(next[i].equals(params[i]));
    for (std::int64_t j = 0; j < st.m[i].size(); ++j) {
      CHECK(st.m[i].at(j) == 0.0);
      CHECK(st.v[i].at(j) == 0.0);
    }
  }
}

TEST_CASE("adam single-step hand evaluation") {
  // p=1, g=1, lr=0.1: mhat=1, vhat=1 -> p - 0.1/(1+1e-8)
  std::vector<Tensor> params{Tensor::scalar(1.0)};
  std::vector<Tensor> grads{Tensor::scalar(1.0)};
  AdamState st = AdamState::init(params, 0.1);
  auto next = adam_step(params, grads, st);
  CHECK(next[0].item() == doctest::Approx(0.9).epsilon(1e-8));
  CHECK(st.step == 1);
}

TEST_CASE("adam bounded update under constant gradient") {
  std::vector<Tensor> params{Tensor::scalar(5.0)};
  std::vector<Tensor> grads{Tensor::scalar(0.37)};
  AdamState st = AdamState::init(params, 0.01);
  double prev = 5.0;
  for (int s = 1; s <= 2; ++s) {
    params = adam_step(params, grads, st);
    CHECK(st.step == s);
    CHECK(std::abs(params[0].item() - prev) <= st.lr * (1.0 + st.eps) + 1e-15);
    prev = params[0].item();
  }
}

TEST_CASE("adam shape mismatch raises") {
  std::vector<Tensor> params{Tensor::zeros({2})};
  std::vector<Tensor> grads{Tensor::zeros({3})};
  AdamState st = AdamState::init(params, 0.1);
  CHECK_THROWS_AS(adam_step(params, grads, st), DimensionError);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, "task") != derive_seed(1, "noise"));
  CHECK(derive_seed(1, "task", 0) != derive_seed(1, "task", 1));
  CHECK(derive_seed(1, "task", 5) == derive_seed(1, "task", 5));
  CHECK(derive_seed(2, "task") != derive_seed(1, "task"));
}

}  // TEST_SUITE
