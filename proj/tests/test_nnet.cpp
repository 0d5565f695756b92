#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "finite_diff.hpp"
#include "scdc/error.hpp"
#include "scdc/nnet.hpp"

using namespace scdc::nn;
using fd::mlp_gradient_error;
using fd::op_gradient_error;
using fd::random_tensor;

TEST_CASE("scalar gradient of w squared") {
  Parameter w("w", Tensor::Constant(1, 1, 3.0));
  Tape tape;
  tape.backward(square(tape.parameter(w)));
  CHECK(w.grad(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("constant outputs give zero parameter gradients") {
  Parameter w("w", Tensor::Constant(2, 2, 1.5));
  Tape tape;
  tape.parameter(w);
  tape.backward(sum(tape.constant(Tensor::Ones(2, 2))));
  CHECK(w.grad.isZero());
}

TEST_CASE("backward requires a scalar seed and runs once") {
  Tape tape;
  const Var v = tape.variable(Tensor::Ones(2, 1));
  CHECK_THROWS_AS(tape.backward(v), scdc::ContractError);
  const Var s = sum(v);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), scdc::ContractError);
}

TEST_CASE("every tape operation matches central differences") {
  std::mt19937_64 rng(11);
  const auto A = [&](Eigen::Index r, Eigen::Index c) { return random_tensor(rng, r, c); };
  const auto P = [&](Eigen::Index r, Eigen::Index c) { return random_tensor(rng, r, c, 0.5, 2.0); };
  const double tol = 1e-6;
  using V = std::vector<Var>;
  CHECK(op_gradient_error([](V& v) { return add(v[0], v[1]); }, {A(3, 4), A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return add(v[0], v[1]); }, {A(3, 4), A(1, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return sub(v[0], v[1]); }, {A(3, 4), A(3, 1)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return mul(v[0], v[1]); }, {A(3, 4), A(1, 1)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return mul(v[0], v[1]); }, {A(1, 4), A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return div(v[0], v[1]); }, {A(3, 4), P(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return div(v[0], v[1]); }, {A(3, 4), P(3, 1)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return neg(v[0]); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return scale(v[0], -2.5); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return add_const(v[0], 4.0); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return exp(v[0]); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return log(v[0]); }, {P(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return square(v[0]); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return relu(v[0]); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return softplus(v[0]); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return sigmoid(v[0]); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return log_sigmoid(v[0]); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return clamp(v[0], -0.5, 0.5); }, {A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return matmul(v[0], v[1]); }, {A(3, 4), A(4, 2)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return transpose(v[0]); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return reshape(v[0], 2, 6); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return sum(v[0]); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return row_sum(v[0]); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return col_sum(v[0]); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return dot(v[0], v[1]); }, {A(1, 4), A(1, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return row(v[0], 1); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return slice_rows(v[0], 1, 2); }, {A(4, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return slice_cols(v[0], 1, 2); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return vstack(v); }, {A(1, 3), A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return hstack(v); }, {A(2, 1), A(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return softmax_rows(v[0]); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return log_softmax_rows(v[0]); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return logsumexp_rows(v[0]); }, {A(3, 4)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return diag_embed(v[0]); }, {A(1, 3)}, rng) < tol);
  const Tensor noise = A(2, 3);
  CHECK(op_gradient_error([&](V& v) { return reparameterize(v[0], v[1], noise); }, {A(2, 3), P(2, 3)}, rng) < tol);
  CHECK(op_gradient_error([](V& v) { return gaussian_diag_log_density(v[0], v[1], v[2]); }, {A(3, 2), A(3, 2), A(3, 2)},
                          rng) < tol);
}

TEST_CASE("large logits stay finite through softmax and log_sigmoid") {
  Tape tape;
  const Var v = tape.constant(Tensor::Constant(1, 2, 800.0));
  CHECK(softmax_rows(v).value().allFinite());
  CHECK(log_sigmoid(scale(v, -1.0)).value()(0, 0) == doctest::Approx(-800.0));
}

TEST_CASE("reparameterize") {
  Tape tape;
  const Var mean = tape.constant(Tensor::Constant(1, 3, 2.0));
  const Var std = tape.constant(Tensor::Constant(1, 3, 0.5));
  CHECK(reparameterize(mean, std, Tensor::Zero(1, 3)).value().isApprox(mean.value()));
  const Tensor noise = Tensor::Constant(1, 3, -1.3);
  const Var unit = reparameterize(tape.constant(Tensor::Zero(1, 3)), tape.constant(Tensor::Ones(1, 3)), noise);
  CHECK(unit.value().isApprox(noise));
  CHECK_THROWS_AS(reparameterize(mean, tape.constant(Tensor::Zero(1, 3)), noise), scdc::DomainError);

  // Monte-Carlo moments within three standard errors.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int n = 100000;
  Tensor draws(n, 1);
  for (int i = 0; i < n; ++i) draws(i, 0) = n01(rng);
  Tape t2;
  const Var out = reparameterize(t2.constant(Tensor::Constant(n, 1, 1.5)), t2.constant(Tensor::Constant(n, 1, 0.7)), draws);
  const double m = out.value().mean();
  const double var = (out.value().array() - m).square().sum() / (n - 1);
  CHECK(std::abs(m - 1.5) < 3.0 * 0.7 / std::sqrt(n));
  CHECK(std::abs(var - 0.49) < 3.0 * 0.49 * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("mlp forward trivial networks") {
  std::mt19937_64 rng(13);
  Mlp zero({3, {5}, {{"out", 2, std::nullopt}}}, rng);
  for (Parameter* p : zero.parameters()) p->value.setZero();
  CHECK(zero.forward(random_tensor(rng, 4, 3)).at("out").isZero());

  Mlp linear({3, {}, {{"out", 3, std::nullopt}}}, rng);
  linear.parameters()[0]->value = Tensor::Identity(3, 3);
  const Tensor x = random_tensor(rng, 4, 3);
  CHECK(linear.forward(x).at("out") == x);
  CHECK_THROWS_AS(linear.forward(random_tensor(rng, 4, 2)), scdc::ShapeError);
}

TEST_CASE("2-40-40-2 forward matches a straight-line implementation") {
  std::mt19937_64 rng(14);
  Mlp net({2, {40, 40}, {{"out", 2, std::nullopt}}}, rng);
  for (Parameter* p : net.parameters()) p->value = random_tensor(rng, p->value.rows(), p->value.cols());
  const auto ps = net.parameters();
  const Tensor x = random_tensor(rng, 5, 2, -3.0, 3.0);
  const Tensor out = net.forward(x).at("out");
  for (int n = 0; n < 5; ++n) {
    std::vector<double> a(x.row(n).data(), x.row(n).data() + 2);
    for (int layer = 0; layer < 3; ++layer) {
      const Tensor& W = ps[2 * layer]->value;
      const Tensor& b = ps[2 * layer + 1]->value;
      std::vector<double> next(static_cast<std::size_t>(W.cols()));
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        double s = b(0, j);
        for (Eigen::Index i = 0; i < W.rows(); ++i) s += a[static_cast<std::size_t>(i)] * W(i, j);
        next[static_cast<std::size_t>(j)] = layer < 2 ? std::max(s, 0.0) : s;
      }
      a = next;
    }
    CHECK(std::abs(a[0] - out(n, 0)) < 1e-12);
    CHECK(std::abs(a[1] - out(n, 1)) < 1e-12);
  }
  CHECK(net.forward(x) == net.forward(x));
}

TEST_CASE("skip path adds a linear map of the input") {
  std::mt19937_64 rng(17);
  Mlp net({3, {6}, {{"out", 2, std::nullopt}}, true}, rng);
  const auto ps = net.parameters();
  REQUIRE(ps.size() == 5);
  CHECK(ps.back()->name == "out.skip");
  const Tensor x = random_tensor(rng, 4, 3);
  const Tensor with = net.forward(x).at("out");
  const Tensor skip = ps.back()->value;
  ps.back()->value.setZero();
  CHECK((with - net.forward(x).at("out") - x * skip).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("log-variance heads respect the clamp") {
  std::mt19937_64 rng(15);
  Mlp net({2, {8}, {{"log_var", 3, std::make_pair(kLogVarMin, kLogVarMax)}}}, rng);
  for (Parameter* p : net.parameters()) p->value *= 1000.0;
  const Tensor lv = net.forward(random_tensor(rng, 20, 2, -10.0, 10.0)).at("log_var");
  CHECK((lv.array() >= kLogVarMin).all());
  CHECK((lv.array() <= kLogVarMax).all());
  CHECK(((lv.array() == kLogVarMin) || (lv.array() == kLogVarMax)).any());
}

TEST_CASE("every network configuration matches central differences") {
  std::mt19937_64 rng(16);
  const auto clamp = std::make_pair(kLogVarMin, kLogVarMax);
  struct Case {
    MlpSpec spec;
    double input_scale;
  };
  const std::vector<Case> cases = {
      // decoders x -> o
      {{2, {40, 40}, {{"mean", 2, std::nullopt}, {"log_var", 2, clamp}}}, 2.0},
      {{1, {40, 40}, {{"mean", 1, std::nullopt}, {"log_var", 1, clamp}}}, 2.0},
      // recognition potentials o -> (h, j)
      {{2, {40, 40}, {{"h", 2, std::nullopt}, {"j", 2, std::nullopt}}}, 2.0},
      // cluster encoder o -> logits and position encoder [onehot z, o] -> x
      {{2, {40, 40}, {{"logits", 15, std::nullopt}}}, 2.0},
      {{17, {40, 40}, {{"mean", 2, std::nullopt}, {"log_var", 2, clamp}}}, 1.0},
      // with the linear skip path
      {{2, {40, 40}, {{"mean", 2, std::nullopt}, {"log_var", 2, clamp}}, true}, 2.0},
      {{2, {40, 40}, {{"h", 2, std::nullopt}, {"j", 2, std::nullopt}}, true}, 2.0},
  };
  for (const Case& c : cases) {
    Mlp net(c.spec, rng);
    const Tensor x = random_tensor(rng, 6, static_cast<Eigen::Index>(c.spec.input), -c.input_scale, c.input_scale);
    CHECK(mlp_gradient_error(net, x, rng) < 1e-4);
  }
}

TEST_CASE("optimizer steps") {
  Parameter p("p", Tensor::Constant(1, 1, 1.0));
  std::vector<Parameter*> ps = {&p};
  OptimizerConfig sgd{OptimizerKind::kSgdMomentum, 0.1, 0.0};
  OptimizerState s0;
  p.grad.setZero();
  optimizer_step(ps, s0, sgd);
  CHECK(p.value(0, 0) == 1.0);
  p.grad.setOnes();
  optimizer_step(ps, s0, sgd);
  CHECK(p.value(0, 0) == doctest::Approx(0.9));

  OptimizerConfig momentum{OptimizerKind::kSgdMomentum, 0.1, 0.9};
  OptimizerState s1;
  p.value(0, 0) = 0.0;
  p.grad.setOnes();
  optimizer_step(ps, s1, momentum);
  const double first = p.value(0, 0);
  optimizer_step(ps, s1, momentum);
  CHECK(first == doctest::Approx(-0.1));
  CHECK(p.value(0, 0) - first == doctest::Approx(-0.19));

  OptimizerConfig ascent = momentum;
  ascent.ascent = true;
  OptimizerState s2;
  p.value(0, 0) = 0.0;
  optimizer_step(ps, s2, ascent);
  CHECK(p.value(0, 0) == doctest::Approx(0.1));

  // Adam's first step has magnitude lr whatever the gradient scale.
  OptimizerConfig adam{OptimizerKind::kAdam, 0.01};
  for (double g : {1e-3, 1.0, 250.0}) {
    OptimizerState s3;
    p.value(0, 0) = 0.0;
    p.grad.setConstant(g);
    optimizer_step(ps, s3, adam);
    CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-4));
  }

  p.value(0, 0) = 2.0;
  p.grad(0, 0) = std::nan("");
  OptimizerState s4;
  CHECK_THROWS_AS(optimizer_step(ps, s4, adam), scdc::TrainingDivergence);
  CHECK(p.value(0, 0) == 2.0);
  CHECK(parse_optimizer_kind(to_string(OptimizerKind::kAdam)) == OptimizerKind::kAdam);
  CHECK_THROWS(parse_optimizer_kind("rmsprop"));
}
