#include <cmath>

#include "doctest.h"
#include "stzero/tensor.hpp"
#include "test_util.hpp"

using namespace stzero;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("matmul identity and hand-computed products") {
  Tape tape;
  Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  Tensor b = Tensor::from_rows({{5, 6}, {7, 8}});
  CHECK(max_abs_diff(tape.matmul(eye, b), b) == 0.0);
  CHECK(max_abs_diff(tape.matmul(b, eye), b) == 0.0);

  Tensor a = Tensor::from_rows({{1, 2}});
  Tensor c = Tensor::from_rows({{3}, {4}});
  Tensor prod = tape.matmul(a, c);
  CHECK(prod.rows() == 1);
  CHECK(prod.cols() == 1);
  CHECK(prod.values()[0] == 11.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape tape;
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(2, 2);
  CHECK_THROWS_AS(tape.matmul(a, b), DimensionError);
  CHECK_THROWS_WITH_AS(tape.matmul(a, b), doctest::Contains("2x3"), DimensionError);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(42);
  Tensor a = random_tensor(rng, 4, 3, true);
  Tensor b = random_tensor(rng, 3, 2, true);
  // Squared entries give both factors nontrivial gradients.
  auto build_loss = [&](Tape& tape) {
    Tensor p = tape.matmul(a, b);
    return tape.sum_all(tape.mul(p, p));
  };
  GradCheckReport report = grad_check(build_loss, {{"a", a}, {"b", b}}, 1e-6, 1e-6);
  CHECK(report.all_pass);
}

TEST_CASE("concat_cols basics and gradient split") {
  Tape tape;
  Tensor one = Tensor::from_rows({{1}});
  Tensor two = Tensor::from_rows({{2}});
  Tensor three = Tensor::from_rows({{3}});
  Tensor cat = tape.concat_cols({one, two, three});
  CHECK(cat.rows() == 1);
  CHECK(cat.cols() == 3);
  CHECK(cat.values() == std::vector<double>{1, 2, 3});

  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  CHECK(max_abs_diff(tape.concat_cols({a}), a) == 0.0);

  Tensor bad = Tensor::zeros(3, 1);
  CHECK_THROWS_AS(tape.concat_cols({a, bad}), DimensionError);

  // gradient of sum(concat(A, B)) with respect to A is all ones
  Rng rng(7);
  Tensor ga = random_tensor(rng, 2, 2, true);
  Tensor gb = random_tensor(rng, 2, 3, true);
  Tape tape2;
  Tensor loss = tape2.sum_all(tape2.concat_cols({ga, gb}));
  tape2.backward(loss);
  for (double g : ga.grad()) CHECK(g == 1.0);
  GradCheckReport report = grad_check(
      [&](Tape& t) { return t.sum_all(t.concat_cols({ga, gb})); },
      {{"a", ga}, {"b", gb}}, 1e-6, 1e-6);
  CHECK(report.all_pass);
}

TEST_CASE("mean_rows including the empty case") {
  Tape tape;
  Tensor x = Tensor::from_rows({{2, 4}, {4, 8}});
  Tensor m = tape.mean_rows(x);
  CHECK(m.values() == std::vector<double>{3, 6});

  Tensor empty = Tensor::zeros(0, 3);
  Tensor zero_row = tape.mean_rows(empty);
  CHECK(zero_row.rows() == 1);
  CHECK(zero_row.cols() == 3);
  CHECK(zero_row.values() == std::vector<double>{0, 0, 0});
  CHECK_FALSE(zero_row.requires_grad());

  Rng rng(3);
  Tensor p = random_tensor(rng, 5, 4, true);
  GradCheckReport report = grad_check(
      [&](Tape& t) {
        Tensor mr = t.mean_rows(p);
        return t.sum_all(t.mul(mr, mr));
      },
      {{"p", p}}, 1e-6, 1e-6);
  CHECK(report.all_pass);
}

TEST_CASE("mean_rows over identical rows reproduces the row exactly") {
  Rng rng(9);
  std::vector<double> row(6);
  for (double& v : row) v = rng.normal();
  std::vector<double> data;
  for (int i = 0; i < 7; ++i) data.insert(data.end(), row.begin(), row.end());
  Tape tape;
  Tensor m = tape.mean_rows(Tensor::from_data(7, 6, data));
  CHECK(testutil::bitwise_equal(m.values(), row));
}

TEST_CASE("softmax, relu, and layer_norm base cases") {
  Tape tape;
  Tensor sm = tape.softmax_rows(Tensor::from_rows({{0, 0}}));
  CHECK(sm.values()[0] == doctest::Approx(0.5));
  CHECK(sm.values()[1] == doctest::Approx(0.5));

  Tensor r = tape.relu(Tensor::from_rows({{-1, 2}}));
  CHECK(r.values() == std::vector<double>{0, 2});

  Tensor constant_row = Tensor::from_rows({{3, 3, 3, 3}});
  Tensor gain = Tensor::full(1, 4, 1.0);
  Tensor bias = Tensor::zeros(1, 4);
  Tensor ln = tape.layer_norm(constant_row, gain, bias);
  for (double v : ln.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(tape.layer_norm(constant_row, Tensor::zeros(1, 3), bias), DimensionError);
}

TEST_CASE("nonlinear op gradients match finite differences") {
  Rng rng(21);
  Tensor x = random_tensor(rng, 3, 5, true);
  Tensor gain = random_tensor(rng, 1, 5, true);
  Tensor bias = random_tensor(rng, 1, 5, true);

  SUBCASE("softmax_rows") {
    Tensor weights = random_tensor(rng, 3, 5);
    GradCheckReport report = grad_check(
        [&](Tape& t) { return t.sum_all(t.mul(t.softmax_rows(x), weights)); },
        {{"x", x}}, 1e-6, 1e-4);
    CHECK(report.all_pass);
  }
  SUBCASE("layer_norm") {
    Tensor weights = random_tensor(rng, 3, 5);
    GradCheckReport report = grad_check(
        [&](Tape& t) { return t.sum_all(t.mul(t.layer_norm(x, gain, bias), weights)); },
        {{"x", x}, {"gain", gain}, {"bias", bias}}, 1e-6, 1e-4);
    CHECK(report.all_pass);
  }
  SUBCASE("sqrt and div") {
    Tensor pos = Tensor::zeros(2, 3, true);
    for (double& v : pos.values()) v = 0.5 + rng.uniform();
    Tensor denom = Tensor::zeros(2, 3, true);
    for (double& v : denom.values()) v = 1.0 + rng.uniform();
    GradCheckReport report = grad_check(
        [&](Tape& t) { return t.sum_all(t.div(t.sqrt_elem(pos), denom)); },
        {{"pos", pos}, {"denom", denom}}, 1e-6, 1e-4);
    CHECK(report.all_pass);
  }
  SUBCASE("transpose, add_rowvec, slices") {
    GradCheckReport report = grad_check(
        [&](Tape& t) {
          Tensor y = t.add_rowvec(t.transpose(x), t.slice_cols(bias, 0, 3));
          Tensor s = t.slice_rows(y, 1, 4);
          return t.sum_all(t.mul(s, s));
        },
        {{"x", x}, {"bias", bias}}, 1e-6, 1e-6);
    CHECK(report.all_pass);
  }
}

TEST_CASE("neighbor_mean forward and backward") {
  Tape tape;
  Tensor h = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  std::vector<std::vector<int>> lists = {{1, 2}, {}, {0}};
  Tensor m = tape.neighbor_mean(h, lists);
  CHECK(m.values() == std::vector<double>{4, 5, 0, 0, 1, 2});
  CHECK_THROWS_AS(tape.neighbor_mean(h, {{3}}), ContractError);

  Rng rng(5);
  Tensor p = random_tensor(rng, 4, 3, true);
  GradCheckReport report = grad_check(
      [&](Tape& t) {
        Tensor nm = t.neighbor_mean(p, {{1, 2, 3}, {0}, {}, {2, 0}});
        return t.sum_all(t.mul(nm, nm));
      },
      {{"p", p}}, 1e-6, 1e-6);
  CHECK(report.all_pass);
}

TEST_CASE("backward populates gradients and enforces its contract") {
  SUBCASE("sum of a matrix gives all-ones gradient") {
    Tensor w = Tensor::from_rows({{1, 2}, {3, 4}});
    w.set_requires_grad(true);
    Tape tape;
    Tensor loss = tape.sum_all(w);
    tape.backward(loss);
    for (double g : w.grad()) CHECK(g == 1.0);
  }
  SUBCASE("self-mse has zero gradient") {
    Tensor x = Tensor::from_rows({{1, 2, 3}});
    x.set_requires_grad(true);
    Tape tape;
    Tensor diff = tape.sub(x, x);
    Tensor loss = tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / 3.0);
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == 0.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = Tensor::zeros(2, 2, true);
    Tape tape;
    Tensor y = tape.scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  SUBCASE("a foreign tensor is rejected") {
    Tensor x = Tensor::zeros(1, 1, true);
    Tape tape;
    CHECK_THROWS_AS(tape.backward(x), ContractError);
    Tape other;
    Tensor y = other.scale(x, 1.0);
    Tape third;
    CHECK_THROWS_AS(third.backward(y), ContractError);
  }
  SUBCASE("repeated backward without a fresh tape fails") {
    Tensor x = Tensor::zeros(1, 1, true);
    Tape tape;
    Tensor loss = tape.scale(x, 2.0);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
  }
}

TEST_CASE("backward is bit-deterministic") {
  Rng rng(33);
  Tensor a = random_tensor(rng, 6, 5, true);
  Tensor b = random_tensor(rng, 5, 4, true);
  auto run = [&]() {
    a.zero_grad();
    b.zero_grad();
    Tape tape;
    Tensor p = tape.softmax_rows(tape.matmul(a, b));
    Tensor loss = tape.sum_all(tape.mul(p, p));
    tape.backward(loss);
    return std::make_pair(a.grad(), b.grad());
  };
  auto first = run();
  auto second = run();
  CHECK(testutil::bitwise_equal(first.first, second.first));
  CHECK(testutil::bitwise_equal(first.second, second.second));
}

TEST_CASE("grad_check is exact on a quadratic") {
  Tensor w = Tensor::from_rows({{0.7, -1.3, 2.1}});
  w.set_requires_grad(true);
  GradCheckReport report = grad_check(
      [&](Tape& t) { return t.matmul(w, t.transpose(w)); }, {{"w", w}}, 1e-6, 1e-8);
  CHECK(report.all_pass);
  CHECK(report.items.size() == 1);
  CHECK(report.items[0].max_rel_err <= 1e-8);
}

TEST_CASE("grad_check reports a corrupted gradient path") {
  Tensor w = Tensor::from_rows({{0.5, 1.5}});
  w.set_requires_grad(true);
  // A constant snapshot of the parameter leaks its value around the tape, so
  // the analytic gradient misses that contribution while the finite
  // difference sees it.
  GradCheckReport report = grad_check(
      [&](Tape& t) {
        Tensor detached = Tensor::from_data(1, 2, w.values());
        Tensor loss = t.sum_all(t.mul(w, w));
        return t.add(loss, t.scale(t.sum_all(detached), 0.25));
      },
      {{"w", w}}, 1e-6, 1e-4);
  CHECK_FALSE(report.all_pass);
  CHECK(report.items[0].max_rel_err > 1e-2);
}

TEST_CASE("grad_check flags non-finite evaluations with the parameter name") {
  // Finite at the base point, infinite once the first entry is nudged down
  // onto the pole of 1/x.
  Tensor w = Tensor::from_rows({{1e-6, 1.0}});
  w.set_requires_grad(true);
  Tensor one = Tensor::full(1, 2, 1.0);
  CHECK_THROWS_WITH_AS(
      grad_check([&](Tape& t) { return t.sum_all(t.div(one, w)); }, {{"w", w}}, 1e-6, 1e-4),
      doctest::Contains("'w'"), NumericError);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_data(2, 2, {1.0, 2.0}), DimensionError);
  Tensor t = Tensor::zeros(2, 3);
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(t.at(2, 0), ContractError);
  CHECK_THROWS_AS(t.grad(), ContractError);
  t.set_requires_grad(true);
  CHECK(t.grad().size() == 6);
}
