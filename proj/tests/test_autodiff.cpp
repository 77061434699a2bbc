#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gsr/autodiff.hpp"
#include "gsr/ops.hpp"
#include "support/oracles.hpp"

using namespace gsr;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Contracts the op output with fixed, non-uniform weights so every output
// entry contributes a distinct amount to the scalar.
Var contract(const Var& out) {
  Tensor w(out.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  return sum(mul(out, out.tape().constant(std::move(w))));
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double offset = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    v = n(rng);
    // keep clear of kinks at zero
    if (std::abs(v) < 0.05) v += 0.1;
    v += offset;
  }
  return t;
}

// Worst relative error between backward and central differences over all inputs.
double gradient_error(std::vector<Tensor> inputs, const Builder& f, double h = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  const Var root = contract(f(tape, vars));
  tape.backward(root);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = vars[k].grad();
    auto eval = [&] {
      Tape t2;
      std::vector<Var> v2;
      for (const Tensor& t : inputs) v2.push_back(t2.constant(t));
      return contract(f(t2, v2)).value().item();
    };
    const auto numeric = testing::central_difference(inputs[k].values(), eval, h);
    worst = std::max(worst, testing::max_relative_error(analytic.values(), numeric, 1e-6));
  }
  return worst;
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("elementwise binary ops") {
  const Tensor a = random_tensor({4, 3}, 1);
  const Tensor b = random_tensor({4, 3}, 2);
  const Tensor s = Tensor::scalar(0.8);
  CHECK(gradient_error({a, b}, [](Tape&, auto& v) { return add(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({a, b}, [](Tape&, auto& v) { return sub(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({a, b}, [](Tape&, auto& v) { return mul(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({a, s}, [](Tape&, auto& v) { return mul(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({s, b}, [](Tape&, auto& v) { return sub(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return scale(v[0], -1.7); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return add_scalar(v[0], 3.0); }) < kTol);
}

TEST_CASE("elementwise unary ops") {
  const Tensor a = random_tensor({5, 4}, 3);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return relu(v[0]); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return leaky_relu(v[0], 0.2); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return tanh(v[0]); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return square(v[0]); }) < kTol);
}

TEST_CASE("leaky relu forward is exact") {
  Tape tape;
  const Tensor x = Tensor::vector({-2.0, -0.0, 0.0, 1e-300, 3.5, -1e-3});
  const Var y = leaky_relu(tape.constant(x), 0.2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y.value()[i] == (x[i] > 0.0 ? x[i] : 0.2 * x[i]));
  }
}

TEST_CASE("reductions and reshape") {
  const Tensor a = random_tensor({3, 4}, 4);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return sum(v[0]); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return mean(v[0]); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, auto& v) { return reshape(v[0], {2, 6}); }) < kTol);
}

TEST_CASE("matmul and row broadcasts") {
  const Tensor x = random_tensor({5, 3}, 5);
  const Tensor w = random_tensor({3, 4}, 6);
  const Tensor r = random_tensor({3}, 7);
  CHECK(gradient_error({x, w}, [](Tape&, auto& v) { return matmul(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({x, r}, [](Tape&, auto& v) { return add_rows(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({x, r}, [](Tape&, auto& v) { return mul_rows(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({w}, [](Tape&, auto& v) { return select_row(v[0], 2); }) < kTol);
}

TEST_CASE("batch statistics and normalization") {
  const Tensor x = random_tensor({6, 4}, 8);
  CHECK(gradient_error({x}, [](Tape&, auto& v) { return batch_stats(v[0]).mean; }) < kTol);
  CHECK(gradient_error({x}, [](Tape&, auto& v) { return batch_stats(v[0]).var; }) < kTol);
  CHECK(gradient_error({x}, [](Tape&, auto& v) {
          const BatchStats st = batch_stats(v[0]);
          return normalize(v[0], st.mean, st.var, 1e-5);
        }) < 1e-5);
}

TEST_CASE("biased batch variance") {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix(4, 1, {1, 2, 3, 6}));
  const BatchStats st = batch_stats(x);
  CHECK(st.mean.value()[0] == doctest::Approx(3.0));
  CHECK(st.var.value()[0] == doctest::Approx(3.5));  // 14 / 4
}

TEST_CASE("parameters accumulate gradients and backward re-zeroes them") {
  Parameter p("p", Tensor::vector({1.0, -2.0}));
  for (int round = 0; round < 2; ++round) {
    Tape tape;
    const Var v = tape.parameter(p);
    tape.backward(sum(square(v)));
    CHECK(p.grad == Tensor::vector({2.0, -4.0}));
  }
}

TEST_CASE("a node used twice sums both paths") {
  Tape tape;
  const Var x = tape.variable(Tensor::scalar(3.0));
  tape.backward(mul(x, x));
  CHECK(x.grad().item() == doctest::Approx(6.0));
}

TEST_CASE("errors") {
  Tape tape;
  const Var a = tape.constant(Tensor::vector({1, 2, 3}));
  const Var b = tape.constant(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
  CHECK_THROWS_AS(scale(a, std::numeric_limits<double>::infinity()), NonFiniteError);
  Parameter bad("bad", Tensor::scalar(0.0));
  bad.value[0] = std::nan("");
  CHECK_THROWS_AS(tape.parameter(bad), NonFiniteError);
  Tape other;
  CHECK_THROWS_AS(add(a, other.constant(Tensor::vector({1, 2, 3}))), std::logic_error);
}
