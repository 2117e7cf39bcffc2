#include <doctest.h>

#include <cmath>
#include <cstring>

#include "dapa/nn.hpp"
#include "dapa/rng.hpp"
#include "dapa/tape.hpp"
#include "test_util.hpp"

using namespace dapa;
using testutil::Builder;
using testutil::fd_max_rel_err;
using testutil::random_tensor;

TEST_SUITE("tensor_nn") {

TEST_CASE("forward_mlp: identity single layer passes input through") {
  MLPParams p;
  MLPParams::Layer l;
  l.weight = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  l.bias = Tensor::zeros({3});
  l.act = Activation::identity;
  p.layers.push_back(l);
  const Tensor x = Tensor::vec({0.5, -1.25, 2.0});
  const Tensor y = forward_mlp(p, x);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("forward_mlp: zero weights return the bias for any input") {
  MLPParams p;
  MLPParams::Layer l;
  l.weight = Tensor::zeros({4, 2});
  l.bias = Tensor::vec({0.7, -0.3});
  p.layers.push_back(l);
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor y = forward_mlp(p, random_tensor({4}, rng));
    CHECK(y[0] == 0.7);
    CHECK(y[1] == -0.3);
  }
}

TEST_CASE("forward_mlp: two-layer tanh net matches scalar arithmetic") {
  MLPParams p;
  MLPParams::Layer l1;
  l1.weight = Tensor({2, 2}, {0.1, -0.2, 0.3, 0.4});
  l1.bias = Tensor::vec({0.05, -0.1});
  l1.act = Activation::tanh;
  MLPParams::Layer l2;
  l2.weight = Tensor({2, 1}, {0.7, -0.5});
  l2.bias = Tensor::vec({0.2});
  p.layers.push_back(l1);
  p.layers.push_back(l2);

  const double x0 = 0.3, x1 = -0.6;
  // Hand-rolled scalar chain, independent of the Tensor path.
  const double h0 = std::tanh(x0 * 0.1 + x1 * 0.3 + 0.05);
  const double h1 = std::tanh(x0 * -0.2 + x1 * 0.4 - 0.1);
  const double expected = h0 * 0.7 + h1 * -0.5 + 0.2;

  const Tensor y = forward_mlp(p, Tensor::vec({x0, x1}));
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(expected).epsilon(1e-15));

  // Batched path produces the same value.
  Tape tape;
  MLPVars vars = make_leaves(tape, p);
  Var xb = tape.leaf(Tensor({1, 2}, {x0, x1}));
  Var yb = forward_mlp(tape, vars, p, xb);
  CHECK(tape.value(yb)[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("forward_mlp: dimension mismatch raises") {
  Rng rng(0);
  MLPParams p = MLPParams::make({3, 2}, rng);
  CHECK_THROWS_AS((void)forward_mlp(p, Tensor::vec({1.0, 2.0})),
                  DimensionError);
}

TEST_CASE("backward: loss = sum(x) gives unit gradients") {
  Tape tape;
  Var x = tape.leaf(Tensor::vec({1.0, -2.0, 3.5, 0.0}));
  tape.backward(tape.sum(x));
  for (int i = 0; i < 4; ++i) CHECK(tape.grad(x)[i] == 1.0);
}

TEST_CASE("backward: grad of ||Wx||^2 is 2(Wx)x^T") {
  Rng rng(5);
  const Tensor W = random_tensor({2, 3}, rng);
  const Tensor x = random_tensor({3}, rng);
  Tape tape;
  Var wv = tape.leaf(W), xv = tape.leaf(x);
  Var y = tape.matvec(wv, xv);
  tape.backward(tape.sum(tape.mul(y, y)));

  const Tensor& yval = tape.value(y);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(tape.grad(wv).at(i, j) ==
            doctest::Approx(2.0 * yval[i] * x[j]).epsilon(1e-12));
}

TEST_CASE("backward: non-scalar loss is rejected") {
  Tape tape;
  Var x = tape.leaf(Tensor::vec({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("backward: unused parameters keep zero gradient") {
  Tape tape;
  Var used = tape.leaf(Tensor::vec({1.0, 2.0}));
  Var unused = tape.leaf(Tensor::vec({5.0}));
  tape.backward(tape.sum(used));
  CHECK(tape.grad(unused)[0] == 0.0);
}

TEST_CASE("backward: random small net matches finite differences") {
  Rng rng(42);
  const Tensor W1 = random_tensor({4, 5}, rng, 0.5);
  const Tensor b1 = random_tensor({5}, rng, 0.1);
  const Tensor W2 = random_tensor({5, 2}, rng, 0.5);
  const Tensor x = random_tensor({4}, rng);
  Builder net = [](Tape& t, const std::vector<Var>& in) {
    Var h = t.tanh_(t.add(t.vecmat(in[3], in[0]), in[1]));
    Var y = t.vecmat(h, in[2]);
    return t.sum(t.mul(y, y));
  };
  CHECK(fd_max_rel_err(net, {W1, b1, W2, x}) <= 1e-6);
}

TEST_CASE("every differentiable op matches finite differences") {
  Rng rng(7);
  struct Case {
    const char* name;
    Builder build;
    std::vector<Tensor> inputs;
  };
  const Tensor m34 = random_tensor({3, 4}, rng);
  const Tensor m34b = random_tensor({3, 4}, rng);
  const Tensor m43 = random_tensor({4, 3}, rng);
  const Tensor v4 = random_tensor({4}, rng);
  const Tensor v3 = random_tensor({3}, rng);
  const Tensor s1 = random_tensor({1}, rng);
  const Tensor w3 = random_tensor({3}, rng, 0.8);

  auto weighted = [&rng](Tape& t, Var x) {
    // Project through fixed random weights so upstream grads are nontrivial.
    Tensor w = Tensor::zeros(t.value(x).shape);
    Rng local(99);
    for (double& e : w.values) e = local.normal();
    return t.sum(t.mul(x, t.leaf(w)));
  };

  std::vector<Case> cases;
  cases.push_back({"add", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.add(in[0], in[1]));
                   }, {m34, m34b}});
  cases.push_back({"sub", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.sub(in[0], in[1]));
                   }, {m34, m34b}});
  cases.push_back({"mul", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.mul(in[0], in[1]));
                   }, {m34, m34b}});
  cases.push_back({"scale", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.scale(in[0], -1.7));
                   }, {m34}});
  cases.push_back({"add_scalar", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.add_scalar(in[0], 0.3));
                   }, {m34}});
  cases.push_back({"tanh", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.tanh_(in[0]));
                   }, {m34}});
  cases.push_back({"exp", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.exp_(in[0]));
                   }, {m34}});
  cases.push_back({"softplus", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.softplus(in[0]));
                   }, {m34}});
  cases.push_back({"clamp", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.clamp(in[0], -10.0, 10.0));
                   }, {m34}});
  cases.push_back({"matmul", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.matmul(in[0], in[1]));
                   }, {m34, m43}});
  cases.push_back({"matvec", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.matvec(in[0], in[1]));
                   }, {m34, v4}});
  cases.push_back({"vecmat", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.vecmat(in[0], in[1]));
                   }, {v3, m34}});
  cases.push_back({"add_rowvec", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.add_rowvec(in[0], in[1]));
                   }, {m34, v4}});
  cases.push_back({"sub_rowvec", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.sub_rowvec(in[0], in[1]));
                   }, {m34, v4}});
  cases.push_back({"mul_scalar", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.mul_scalar(in[0], in[1]));
                   }, {m34, s1}});
  cases.push_back({"concat_cols", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.concat_cols(in[0], in[1]));
                   }, {m34, m34b}});
  cases.push_back({"stack_rows", [&](Tape& t, const std::vector<Var>& in) {
                     std::vector<Var> rows = {in[0], in[1]};
                     return weighted(t, t.stack_rows(rows));
                   }, {v4, v4}});
  cases.push_back({"slice_row", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.slice_row(in[0], 1));
                   }, {m34}});
  cases.push_back({"slice_cols", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.slice_cols(in[0], 1, 2));
                   }, {m34}});
  cases.push_back({"subvec", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.subvec(in[0], 1, 2));
                   }, {v4}});
  cases.push_back({"sum", [&](Tape& t, const std::vector<Var>& in) {
                     return t.sum(in[0]);
                   }, {m34}});
  cases.push_back({"mean", [&](Tape& t, const std::vector<Var>& in) {
                     return t.mean(in[0]);
                   }, {m34}});
  cases.push_back({"mse", [&](Tape& t, const std::vector<Var>& in) {
                     return t.mse(in[0], in[1]);
                   }, {m34, m34b}});
  cases.push_back({"rodrigues", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.rodrigues(in[0]));
                   }, {w3}});
  const Tensor m33 = random_tensor({3, 3}, rng);
  const Tensor m33b = random_tensor({3, 3}, rng);
  cases.push_back({"rot_compose", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.rot_compose(in[0], in[1]));
                   }, {m33, m33b}});
  cases.push_back({"rot_apply", [&](Tape& t, const std::vector<Var>& in) {
                     return weighted(t, t.rot_apply(in[0], in[1]));
                   }, {m33, v3}});

  for (const Case& c : cases) {
    INFO("op: " << c.name);
    CHECK(fd_max_rel_err(c.build, c.inputs) <= 1e-6);
  }
}

TEST_CASE("determinism: same seed gives bit-identical values and gradients") {
  auto run = [] {
    Rng rng(123);
    MLPParams p = MLPParams::make({6, 8, 3}, rng);
    Tensor x = random_tensor({4, 6}, rng);
    Tape tape;
    MLPVars vars = make_leaves(tape, p);
    Var y = forward_mlp(tape, vars, p, tape.leaf(x));
    Var loss = tape.mse(y, tape.leaf(Tensor::zeros({4, 3})));
    tape.backward(loss);
    std::vector<double> out = {tape.scalar_value(loss)};
    for (Var w : vars.weights)
      for (double g : tape.grad(w).values) out.push_back(g);
    return out;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("adam_step: zero gradient leaves params unchanged, bumps step") {
  AdamState s = AdamState::make(0.1, 3);
  std::vector<double> params = {1.0, -2.0, 0.5};
  const std::vector<double> grads = {0.0, 0.0, 0.0};
  REQUIRE(adam_step(s, params, grads));
  CHECK(s.step == 1);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == -2.0);
  CHECK(params[2] == 0.5);
}

TEST_CASE("adam_step: non-finite gradients are rejected without mutation") {
  AdamState s = AdamState::make(0.1, 2);
  std::vector<double> params = {1.0, 2.0};
  const std::vector<double> grads = {0.5, std::nan("")};
  CHECK_FALSE(adam_step(s, params, grads));
  CHECK(s.step == 0);
  CHECK(params[0] == 1.0);
  CHECK(s.m[0] == 0.0);
}

TEST_CASE("adam_step: moments after one step are (1-b1)g and (1-b2)g^2") {
  AdamState s = AdamState::make(0.01, 2);
  std::vector<double> params = {0.0, 0.0};
  const std::vector<double> grads = {0.3, -1.2};
  REQUIRE(adam_step(s, params, grads));
  for (int i = 0; i < 2; ++i) {
    CHECK(s.m[i] == doctest::Approx((1.0 - s.beta1) * grads[i]).epsilon(1e-15));
    CHECK(s.v[i] ==
          doctest::Approx((1.0 - s.beta2) * grads[i] * grads[i]).epsilon(1e-15));
  }
}

TEST_CASE("adam_step: 1-D quadratic converges, lr=0.1, 200 steps") {
  AdamState s = AdamState::make(0.1, 1);
  std::vector<double> x = {0.0};
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> g = {2.0 * (x[0] - 3.0)};
    REQUIRE(adam_step(s, x, g));
  }
  CHECK(std::fabs(x[0] - 3.0) < 1e-3);
}

TEST_CASE("adam_step: loss monotone after warmup on strictly convex quadratic") {
  AdamState s = AdamState::make(0.01, 1);
  std::vector<double> x = {2.0};
  std::vector<double> losses;
  for (int t = 0; t < 300; ++t) {
    const std::vector<double> g = {2.0 * x[0]};
    REQUIRE(adam_step(s, x, g));
    losses.push_back(x[0] * x[0]);
  }
  for (size_t t = 11; t < losses.size(); ++t)
    CHECK(losses[t] <= losses[t - 1] + 1e-15);
}

TEST_CASE("grad_check: linear function is exact within 1e-9") {
  Tensor w = Tensor::vec({0.4, -1.1, 2.5});
  std::vector<Tensor*> params = {&w};
  CheckedFn f = [&](std::vector<Tensor>* grads) {
    const double val = 3.0 * w[0] - 2.0 * w[1] + 0.5 * w[2];
    if (grads) {
      grads->clear();
      grads->push_back(Tensor::vec({3.0, -2.0, 0.5}));
    }
    return val;
  };
  const GradCheckReport r = grad_check(f, params);
  CHECK(r.max_rel_err <= 1e-9);
  CHECK(r.per_param.size() == 1);
  CHECK(r.per_param[0].checked == 3);
}

TEST_CASE("grad_check: catches a wrong gradient") {
  Tensor w = Tensor::vec({1.0});
  std::vector<Tensor*> params = {&w};
  CheckedFn f = [&](std::vector<Tensor>* grads) {
    if (grads) {
      grads->clear();
      grads->push_back(Tensor::vec({1.0}));  // wrong: true slope is 2w
    }
    return w[0] * w[0];
  };
  CHECK_FALSE(grad_check(f, params).passed(1e-4));
}

TEST_CASE("flatten/unflatten round-trip") {
  Rng rng(3);
  MLPParams p = MLPParams::make({3, 4, 2}, rng);
  auto ptrs = p.tensors();
  const std::vector<double> flat = flatten(ptrs);
  CHECK(int(flat.size()) == total_size(ptrs));
  MLPParams q = MLPParams::make({3, 4, 2}, rng);  // different values
  auto qptrs = q.tensors();
  unflatten(flat, qptrs);
  CHECK(flatten(qptrs) == flat);
}

}  // TEST_SUITE
