#include <doctest.h>

#include <cmath>

#include "stc/gradcheck.hpp"
#include "stc/ops.hpp"
#include "stc/rng.hpp"

using namespace stc;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(s.numel());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(s, std::move(v));
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape invariants") {
  CHECK(Shape{8, 3, 224, 224}.numel() == 8 * 3 * 224 * 224);
  CHECK_THROWS_AS((Shape{0, 2}), ValidationError);
  CHECK_THROWS_AS((Shape{1, 1, 1, 1, 1, 1}), ValidationError);
  CHECK(Shape{2, 3}.str() == "[2,3]");
}

TEST_CASE("tensor construction validates data length") {
  CHECK_THROWS_AS(Tensor(Shape{3}, std::vector<double>{1.0, 2.0}), ValidationError);
  Tensor t(Shape{2, 2}, 1.5);
  CHECK(t[3] == 1.5);
}

TEST_CASE("elementwise_add basics") {
  Tensor a(Shape{2}, std::vector<double>{1, 2});
  CHECK(ops::add(nullptr, a, Tensor(Shape{2}, std::vector<double>{0, 0})).data()[1] == 2);
  Tensor sum = ops::add(nullptr, a, Tensor(Shape{2}, std::vector<double>{3, 4}));
  CHECK(sum[0] == 4);
  CHECK(sum[1] == 6);
}

TEST_CASE("elementwise_add rejects mismatched shapes, reporting both") {
  Tensor a(Shape{2, 3});
  Tensor b(Shape{2, 4});
  try {
    ops::add(nullptr, a, b);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[2,4]") != std::string::npos);
  }
}

TEST_CASE("elementwise_add is commutative and associative bit-exactly") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor(Shape{2, 3, 4}, rng);
    Tensor b = random_tensor(Shape{2, 3, 4}, rng);
    Tensor c = random_tensor(Shape{2, 3, 4}, rng);
    Tensor ab = ops::add(nullptr, a, b);
    Tensor ba = ops::add(nullptr, b, a);
    for (int64_t i = 0; i < ab.numel(); ++i) CHECK(ab[i] == ba[i]);
    Tensor abc1 = ops::add(nullptr, ops::add(nullptr, a, b), c);
    Tensor abc2 = ops::add(nullptr, ops::add(nullptr, a, b), c);
    for (int64_t i = 0; i < abc1.numel(); ++i) CHECK(abc1[i] == abc2[i]);
  }
}

TEST_CASE("backward of sum over add gives all-ones grads to both inputs") {
  Rng rng(3);
  Tensor a = random_tensor(Shape{2, 3, 4}, rng);
  Tensor b = random_tensor(Shape{2, 3, 4}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape tape;
  tape.backward(ops::sum(&tape, ops::add(&tape, a, b)));
  for (double g : a.grad()) CHECK(g == 1.0);
  for (double g : b.grad()) CHECK(g == 1.0);
}

TEST_CASE("scalar_scale basics and gradient") {
  Tensor a(Shape{2}, std::vector<double>{2, -3});
  Tensor same = ops::scale(nullptr, a, 1.0);
  CHECK(same[0] == 2);
  CHECK(same[1] == -3);
  Tensor zero = ops::scale(nullptr, a, 0.0);
  CHECK(zero[0] == 0);
  CHECK(zero[1] == 0);
  CHECK_THROWS_AS(ops::scale(nullptr, a, std::nan("")), ValidationError);

  Rng rng(5);
  double err = ops::finite_diff_check(
      [&](Tape* t, const Tensor& x) { return ops::sum(t, ops::scale(t, x, 2.5)); },
      random_tensor(Shape{3, 4}, rng), 1e-4);
  CHECK(err <= 1e-6);
}

TEST_CASE("relu forward and subgradient") {
  Tensor a(Shape{3}, std::vector<double>{-1, 0, 2});
  Tensor y = ops::relu(nullptr, a);
  CHECK(y[0] == 0);
  CHECK(y[1] == 0);
  CHECK(y[2] == 2);

  Tensor neg(Shape{4}, std::vector<double>{-1, -2, -0.5, -3});
  neg.set_requires_grad(true);
  Tape tape;
  tape.backward(ops::sum(&tape, ops::relu(&tape, neg)));
  for (int64_t i = 0; i < 4; ++i) CHECK(ops::relu(nullptr, neg)[i] == 0.0);
  for (double g : neg.grad()) CHECK(g == 0.0);

  Rng rng(6);
  Tensor x = random_tensor(Shape{4, 5}, rng);
  {
    auto d = x.mutable_data();
    for (auto& v : d)
      if (std::fabs(v) < 1e-3) v = v >= 0 ? 1e-3 : -1e-3;
  }
  double err = ops::finite_diff_check(
      [&](Tape* t, const Tensor& p) { return ops::sum(t, ops::relu(t, p)); }, x, 1e-4);
  CHECK(err <= 1e-5);
}

TEST_CASE("sigmoid saturation and gradient") {
  Tensor zero(Shape{1}, std::vector<double>{0.0});
  CHECK(ops::sigmoid(nullptr, zero)[0] == 0.5);
  Tensor big(Shape{1}, std::vector<double>{40.0});
  CHECK(ops::sigmoid(nullptr, big)[0] == doctest::Approx(1.0).epsilon(1e-12));
  Tensor extreme(Shape{2}, std::vector<double>{1e3, -1e3});
  Tensor sat = ops::sigmoid(nullptr, extreme);
  CHECK(sat[0] == 1.0);
  CHECK(sat[1] == 0.0);
  CHECK(std::isfinite(sat[0]));

  Rng rng(8);
  double err = ops::finite_diff_check(
      [&](Tape* t, const Tensor& p) { return ops::sum(t, ops::sigmoid(t, p)); },
      random_tensor(Shape{3, 3}, rng, -3.0, 3.0), 1e-4);
  CHECK(err <= 1e-6);
}

TEST_CASE("backward: quadratic loss gives grad = a") {
  Rng rng(9);
  Tensor a = random_tensor(Shape{5}, rng);
  a.set_requires_grad(true);
  Tape tape;
  Tensor loss = ops::scale(&tape, ops::sum(&tape, ops::mul(&tape, a, a)), 0.5);
  tape.backward(loss);
  for (int64_t i = 0; i < 5; ++i) CHECK(a.grad()[i] == doctest::Approx(a[i]).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar and detached losses") {
  Tensor a(Shape{3}, 1.0);
  a.set_requires_grad(true);
  Tape tape;
  Tensor vec = ops::add(&tape, a, a);
  CHECK_THROWS_AS(tape.backward(vec), ValidationError);
  Tensor detached = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(detached), ValidationError);
}

TEST_CASE("tensors may not span two tapes") {
  Tensor a(Shape{2}, 1.0);
  a.set_requires_grad(true);
  Tape t1, t2;
  Tensor mid = ops::add(&t1, a, a);
  CHECK_THROWS_AS(ops::add(&t2, mid, mid), ValidationError);
}

TEST_CASE("repeated backward accumulates; zero_grad resets") {
  Tensor a(Shape{2}, std::vector<double>{1, 2});
  a.set_requires_grad(true);
  Tape tape;
  Tensor loss = ops::sum(&tape, a);
  tape.backward(loss);
  tape.backward(loss);
  for (double g : a.grad()) CHECK(g == 2.0);
  a.zero_grad();
  for (double g : a.grad()) CHECK(g == 0.0);
}

TEST_CASE("leaf unused by the loss gets exactly zero grad") {
  Tensor a(Shape{2}, 1.0), b(Shape{2}, 2.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape tape;
  Tensor loss = ops::sum(&tape, ops::scale(&tape, a, 3.0));
  ops::scale(&tape, b, 2.0);  // recorded but disconnected from the loss
  tape.backward(loss);
  for (double g : b.grad()) CHECK(g == 0.0);
  for (double g : a.grad()) CHECK(g == 3.0);
}

TEST_CASE("finite_diff_check: exact for sum, tight for squares") {
  Tensor x(Shape{3}, std::vector<double>{1, 2, 3});
  double err_sum = ops::finite_diff_check(
      [](Tape* t, const Tensor& p) { return ops::sum(t, p); }, x, 1e-4);
  CHECK(err_sum == 0.0);

  double err_sq = ops::finite_diff_check(
      [](Tape* t, const Tensor& p) { return ops::sum(t, ops::mul(t, p, p)); }, x, 1e-4);
  CHECK(err_sq <= 1e-7);

  CHECK_THROWS_AS(ops::finite_diff_check(
                      [](Tape* t, const Tensor& p) { return ops::sum(t, p); }, x, 1e-2),
                  ValidationError);
}

TEST_CASE("finite_diff_check rejects non-deterministic functions") {
  Tensor x(Shape{2}, 1.0);
  int calls = 0;
  CHECK_THROWS_AS(ops::finite_diff_check(
                      [&calls](Tape* t, const Tensor& p) {
                        return ops::scale(t, ops::sum(t, p), 1.0 + 0.1 * calls++);
                      },
                      x, 1e-4),
                  ValidationError);
}

TEST_CASE("all differentiable ops pass the finite-difference suite (5 seeds)") {
  for (auto& r : gradcheck::run_op_suite(5, 1e-4)) {
    INFO(r.name);
    CHECK(r.max_rel_err <= 1e-4);
  }
}

TEST_CASE("forward ops on finite inputs stay finite") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor(Shape{2, 3, 4}, rng, -100.0, 100.0);
    for (const Tensor& out :
         {ops::relu(nullptr, x), ops::sigmoid(nullptr, x), ops::scale(nullptr, x, 3.0),
          ops::add(nullptr, x, x)})
      for (int64_t i = 0; i < out.numel(); ++i) CHECK(std::isfinite(out[i]));
  }
}

TEST_CASE("end-to-end model gradient check (single seed)") {
  auto result = gradcheck::run_model_check(1, 1e-4);
  CHECK(result.max_rel_err <= 1e-4);
}

TEST_SUITE_END();
