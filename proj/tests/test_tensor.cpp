#include <doctest.h>

#include <cmath>

#include "mfhi/rng.hpp"
#include "mfhi/tensor.hpp"

using namespace mfhi;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity") {
  Tensor<float> eye({2, 2}, {1, 0, 0, 1});
  Tensor<float> x({2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = matmul(eye, x, static_cast<Tape<float>*>(nullptr));
  for (int i = 0; i < 6; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("matmul scalar case") {
  Tensor<float> a({1, 2}, {1, 2});
  Tensor<float> b({2, 1}, {3, 4});
  auto y = matmul(a, b, static_cast<Tape<float>*>(nullptr));
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(11.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor<float> a({2, 3});
  Tensor<float> b({2, 2});
  CHECK_THROWS_AS(matmul(a, b, static_cast<Tape<float>*>(nullptr)), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto report = grad_check(
      [&](Tape<double>& tape) { return reduce_sum(matmul(a, b, &tape), &tape); },
      {{"a", a}, {"b", b}});
  CHECK(report.max_rel_error < 1e-7);
}

TEST_CASE("elementwise identities") {
  Tensor<float> x({2, 2}, {1, -2, 3, -4});
  auto same = elementwise(x, Tensor<float>::zeros({2, 2}), EwOp::add,
                          static_cast<Tape<float>*>(nullptr));
  auto ones = elementwise(x, Tensor<float>::full({2, 2}, 1.0f), EwOp::mul,
                          static_cast<Tape<float>*>(nullptr));
  for (int i = 0; i < 4; ++i) {
    CHECK(same[i] == x[i]);
    CHECK(ones[i] == x[i]);
  }
}

TEST_CASE("elementwise max picks pointwise maxima") {
  Tensor<float> a({2}, {1, 5});
  Tensor<float> b({2}, {3, 2});
  auto m = elementwise(a, b, EwOp::max, static_cast<Tape<float>*>(nullptr));
  CHECK(m[0] == 3);
  CHECK(m[1] == 5);
}

TEST_CASE("elementwise max ties route gradient to the first input") {
  Tape<double> tape;
  Tensor<double> a({2}, {1, 1});
  Tensor<double> b({2}, {1, 0});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto loss = reduce_sum(elementwise(a, b, EwOp::max, &tape), &tape);
  tape.backward(loss);
  CHECK(a.grad()[0] == 1);  // tie at index 0
  CHECK(b.grad()[0] == 0);
  CHECK(a.grad()[1] == 1);
  CHECK(b.grad()[1] == 0);
}

TEST_CASE("channel broadcast applies one map across channels") {
  Tensor<float> f({2, 1, 2}, {1, 2, 3, 4});
  Tensor<float> map({1, 1, 2}, {10, 100});
  auto y = elementwise(f, map, EwOp::mul, static_cast<Tape<float>*>(nullptr));
  CHECK(y[0] == 10);
  CHECK(y[1] == 200);
  CHECK(y[2] == 30);
  CHECK(y[3] == 400);
}

TEST_CASE("row broadcast adds a bias row") {
  Tensor<float> m({2, 3}, {0, 0, 0, 1, 1, 1});
  Tensor<float> bias({3}, {1, 2, 3});
  auto y = elementwise(m, bias, EwOp::add, static_cast<Tape<float>*>(nullptr));
  CHECK(y[0] == 1);
  CHECK(y[4] == 3);
  CHECK(y[5] == 4);
}

TEST_CASE("broadcast rejects incompatible shapes") {
  Tensor<float> a({2, 3});
  Tensor<float> b({2});
  CHECK_THROWS_AS(elementwise(a, b, EwOp::add, static_cast<Tape<float>*>(nullptr)),
                  DimensionError);
}

TEST_CASE("elementwise gradients with broadcast") {
  Rng rng(2);
  auto f = random_tensor({3, 2, 2}, rng);
  auto map = random_tensor({1, 2, 2}, rng);
  for (EwOp op : {EwOp::add, EwOp::mul, EwOp::max}) {
    auto report = grad_check(
        [&](Tape<double>& tape) { return reduce_sum(elementwise(f, map, op, &tape), &tape); },
        {{"f", f}, {"map", map}});
    CHECK(report.max_rel_error < 1e-7);
  }
}

TEST_CASE("sigmoid values and stability") {
  Tensor<double> x({3}, {0.0, 40.0, -40.0});
  auto y = sigmoid(x, static_cast<Tape<double>*>(nullptr));
  CHECK(y[0] == doctest::Approx(0.5));
  // agreement with the 64-bit closed form, no overflow at large |x|
  CHECK(y[1] == 1.0 / (1.0 + std::exp(-40.0)));
  CHECK(y[1] <= 1.0);
  CHECK(y[1] > 0.999999);
  CHECK(y[2] == std::exp(-40.0) / (1.0 + std::exp(-40.0)));
  CHECK(y[2] >= 1e-18);
  CHECK(y[2] < 1e-15);
  for (int i = 0; i < 3; ++i) CHECK(std::isfinite(y[i]));
}

TEST_CASE("sigmoid derivative at zero is a quarter") {
  Tape<double> tape;
  Tensor<double> x({1}, {0.0});
  x.set_requires_grad(true);
  auto y = sigmoid(x, &tape);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("relu clips negatives") {
  Tensor<float> x({2}, {-3, 2});
  auto y = relu(x, static_cast<Tape<float>*>(nullptr));
  CHECK(y[0] == 0);
  CHECK(y[1] == 2);
}

TEST_CASE("gap averages spatial positions") {
  Tensor<float> f({1, 2, 2}, {1, 2, 3, 4});
  auto v = gap(f, static_cast<Tape<float>*>(nullptr));
  CHECK(v.size() == 1);
  CHECK(v[0] == doctest::Approx(2.5));

  Tensor<float> c = Tensor<float>::full({3, 2, 2}, 7.0f);
  auto vc = gap(c, static_cast<Tape<float>*>(nullptr));
  for (int i = 0; i < 3; ++i) CHECK(vc[i] == doctest::Approx(7.0));
}

TEST_CASE("gap then scale equals the spatial sum") {
  Rng rng(5);
  auto f = random_tensor({2, 3, 3}, rng);
  auto v = gap(f, static_cast<Tape<double>*>(nullptr));
  for (int c = 0; c < 2; ++c) {
    double sum = 0;
    for (int i = 0; i < 9; ++i) sum += f[c * 9 + i];
    CHECK(v[c] * 9 == doctest::Approx(sum));
  }
}

TEST_CASE("l2_normalize on a 3-4-5 triangle") {
  Tensor<float> v({2}, {3, 4});
  auto u = l2_normalize(v, static_cast<Tape<float>*>(nullptr));
  CHECK(u[0] == doctest::Approx(0.6));
  CHECK(u[1] == doctest::Approx(0.8));
}

TEST_CASE("l2_normalize is idempotent on unit vectors") {
  Tensor<double> v({2}, {0.6, 0.8});
  auto u = l2_normalize(v, static_cast<Tape<double>*>(nullptr));
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("l2_normalize rejects near-zero input") {
  Tensor<double> v({2}, {0, 1e-13});
  CHECK_THROWS_AS(l2_normalize(v, static_cast<Tape<double>*>(nullptr)), DegenerateInputError);
}

TEST_CASE("l2_normalize gradient matches finite differences") {
  Rng rng(6);
  auto v = random_tensor({5}, rng);
  v[0] += 2.0;  // keep the norm away from zero
  auto weights = random_tensor({5}, rng);
  auto report = grad_check(
      [&](Tape<double>& tape) {
        auto u = l2_normalize(v, &tape);
        return reduce_sum(elementwise(u, weights, EwOp::mul, &tape), &tape);
      },
      {{"v", v}});
  CHECK(report.max_rel_error < 1e-7);
}

TEST_CASE("reduce_max takes the first argmax") {
  Tape<double> tape;
  Tensor<double> x({3}, {2, 5, 5});
  x.set_requires_grad(true);
  auto m = reduce_max(x, &tape);
  CHECK(m[0] == 5);
  tape.backward(m);
  CHECK(x.grad()[0] == 0);
  CHECK(x.grad()[1] == 1);
  CHECK(x.grad()[2] == 0);
}

TEST_CASE("take_rows gathers and scatters") {
  Tape<double> tape;
  Tensor<double> m({3, 2}, {1, 2, 3, 4, 5, 6});
  m.set_requires_grad(true);
  auto rows = take_rows(m, {2, 0}, &tape);
  CHECK(rows.shape() == std::vector<int>{2, 2});
  CHECK(rows[0] == 5);
  CHECK(rows[3] == 2);
  auto loss = reduce_sum(rows, &tape);
  tape.backward(loss);
  CHECK(m.grad()[0] == 1);
  CHECK(m.grad()[2] == 0);  // row 1 untouched
  CHECK(m.grad()[4] == 1);
}

TEST_CASE("take_rows validates indices") {
  Tensor<double> m({2, 2});
  CHECK_THROWS_AS(take_rows(m, {2}, static_cast<Tape<double>*>(nullptr)), ArgumentError);
}

TEST_CASE("log of a non-positive value raises NumericError") {
  Tensor<double> x({1}, {0.0});
  CHECK_THROWS_AS(log(x, static_cast<Tape<double>*>(nullptr)), NumericError);
}

TEST_CASE("forward and backward are bitwise repeatable") {
  Rng rng(8);
  auto a = random_tensor({4, 4}, rng);
  auto b = random_tensor({4, 4}, rng);
  auto run = [&]() {
    a.zero_grad();
    b.zero_grad();
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Tape<double> tape;
    auto y = reduce_sum(sigmoid(matmul(a, b, &tape), &tape), &tape);
    tape.backward(y);
    return std::make_pair(y[0], a.grad());
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("grad_check on a quadratic") {
  Tensor<double> x({2}, {1, 2});
  auto report = grad_check(
      [&](Tape<double>& tape) {
        return reduce_sum(elementwise(x, x, EwOp::mul, &tape), &tape);
      },
      {{"x", x}});
  CHECK(report.max_rel_error < 1e-9);
  // the analytic gradient itself
  x.zero_grad();
  x.set_requires_grad(true);
  Tape<double> tape;
  auto y = reduce_sum(elementwise(x, x, EwOp::mul, &tape), &tape);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2));
  CHECK(x.grad()[1] == doctest::Approx(4));
}

TEST_CASE("grad_check names the coordinate that broke the evaluation") {
  // log becomes non-finite when the perturbation pushes x below zero
  Tensor<double> x({2}, {5.0, 1e-6});
  CHECK_THROWS_WITH_AS(
      grad_check(
          [&](Tape<double>& tape) { return reduce_sum(log(x, &tape), &tape); },
          {{"x", x}}, 1e-5),
      doctest::Contains("x[1]"), NumericError);
}

TEST_CASE("grad_check of a constant function reports zero error") {
  Tensor<double> x({3}, {1, 2, 3});
  auto report = grad_check(
      [&](Tape<double>& tape) {
        (void)tape;
        return Tensor<double>({1}, {5.0});
      },
      {{"x", x}});
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("every pointwise op passes the gradient oracle in isolation") {
  Rng rng(10);
  auto weights = random_tensor({6}, rng);
  struct OpCase {
    const char* name;
    std::function<Tensor<double>(const Tensor<double>&, Tape<double>*)> apply;
    double lo, hi;  // input domain
  };
  const std::vector<OpCase> cases = {
      {"sigmoid", [](const Tensor<double>& x, Tape<double>* t) { return sigmoid(x, t); }, -3, 3},
      {"relu", [](const Tensor<double>& x, Tape<double>* t) { return relu(x, t); }, -3, 3},
      {"log", [](const Tensor<double>& x, Tape<double>* t) { return log(x, t); }, 0.5, 4},
      {"reciprocal",
       [](const Tensor<double>& x, Tape<double>* t) { return reciprocal(x, t); }, 0.5, 4},
      {"affine",
       [](const Tensor<double>& x, Tape<double>* t) { return affine(x, 2.5, -0.75, t); }, -3, 3},
      {"clamp",
       [](const Tensor<double>& x, Tape<double>* t) { return clamp(x, -1.0, 1.0, t); }, -3, 3},
  };
  for (const auto& op : cases) {
    CAPTURE(op.name);
    auto x = random_tensor({6}, rng, op.lo, op.hi);
    auto report = grad_check(
        [&](Tape<double>& tape) {
          auto y = op.apply(x, &tape);
          return reduce_sum(elementwise(y, weights, EwOp::mul, &tape), &tape);
        },
        {{"x", x}});
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("composite graph gradient stays under 1e-5") {
  Rng rng(9);
  auto f = random_tensor({3, 4, 4}, rng);
  auto w = random_tensor({5, 3}, rng);
  auto report = grad_check(
      [&](Tape<double>& tape) {
        auto pooled = gap(f, &tape);                                      // {3}
        auto logits = matmul(w, reshape(pooled, {3, 1}, &tape), &tape);   // {5,1}
        auto squashed = sigmoid(reshape(logits, {5}, &tape), &tape);
        auto normalized = l2_normalize(affine(squashed, 2.0, 0.1, &tape), &tape);
        return reduce_sum(clamp(normalized, -0.9, 0.9, &tape), &tape);
      },
      {{"f", f}, {"w", w}});
  CHECK(report.max_rel_error < 1e-5);
}
