#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "pneumo/grad_check.hpp"
#include "pneumo/matrix.hpp"
#include "pneumo/tape.hpp"

using namespace pneumo;

namespace {

// Finite-difference check of a scalar expression built on a fresh tape.
double check_expression(const std::function<Tape::Var(Tape&)>& build,
                        const std::vector<NamedParam>& params) {
  auto fn = [&](bool with_grad) {
    Tape t;
    Tape::Var out = build(t);
    const double v = t.scalar(out);
    if (with_grad) t.backward(out);
    return v;
  };
  GradCheckReport rep = grad_check(fn, params, 1e-5);
  REQUIRE_FALSE(rep.aborted);
  REQUIRE(rep.frozen_grads_zero);
  return rep.max_rel_err;
}

}  // namespace

TEST_CASE("matmul identity and selector", "[numeric]") {
  Matrix eye = Matrix::of({{1, 0}, {0, 1}});
  Matrix a = Matrix::of({{1, 2}, {3, 4}});
  CHECK(matmul(eye, a).bit_equal(a));

  Matrix sel = Matrix::of({{1, 0}});
  Matrix col = Matrix::of({{2}, {5}});
  Matrix r = matmul(sel, col);
  REQUIRE(r.rows() == 1);
  REQUIRE(r.cols() == 1);
  CHECK(r(0, 0) == 2.0);
}

TEST_CASE("matmul matches loop oracle", "[numeric]") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.index(6), k = 1 + rng.index(6), n = 1 + rng.index(6);
    Matrix a = oracles::random_matrix(m, k, rng);
    Matrix b = oracles::random_matrix(k, n, rng);
    CHECK(max_abs_diff(matmul(a, b), oracles::loop_matmul(a, b)) < 1e-14);
  }
}

TEST_CASE("matmul dimension error names both shapes", "[numeric]") {
  Matrix a(3, 4), b(5, 2);
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("3x4") != std::string::npos);
    CHECK(msg.find("5x2") != std::string::npos);
  }
}

TEST_CASE("matmul backward matches finite differences", "[numeric]") {
  Rng rng(12);
  Param a(oracles::random_matrix(3, 4, rng));
  Param b(oracles::random_matrix(4, 2, rng));
  Matrix w = oracles::random_matrix(3, 2, rng);
  const double err = check_expression(
      [&](Tape& t) { return t.weighted_sum(t.matmul(t.param(a), t.param(b)), w); },
      {{"a", &a}, {"b", &b}});
  CHECK(err < 1e-6);
}

TEST_CASE("matmul associativity at tolerance", "[numeric]") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t p = 1 + rng.index(6), q = 1 + rng.index(6),
                      r = 1 + rng.index(6), s = 1 + rng.index(6);
    Matrix a = oracles::random_matrix(p, q, rng);
    Matrix b = oracles::random_matrix(q, r, rng);
    Matrix c = oracles::random_matrix(r, s, rng);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("masked row softmax analytic cases", "[numeric]") {
  Tape t;
  // Uniform over two unmasked entries.
  Matrix mask_all(1, 2);
  Tape::Var u = t.masked_softmax_rows(t.input(Matrix::of({{0, 0}})), mask_all);
  CHECK(t.value(u)(0, 0) == 0.5);
  CHECK(t.value(u)(0, 1) == 0.5);

  // Single unmasked key takes all the weight, masked gets exactly zero.
  Matrix mask_one = Matrix::of({{0, kNegInf}});
  Tape::Var s = t.masked_softmax_rows(t.input(Matrix::of({{9, 5}})), mask_one);
  CHECK(t.value(s)(0, 0) == 1.0);
  CHECK(t.value(s)(0, 1) == 0.0);

  // Two-way softmax with logits ln2 and 0: weights 2/3 and 1/3.
  Matrix mask_two = Matrix::of({{0, 0, kNegInf}});
  Tape::Var v =
      t.masked_softmax_rows(t.input(Matrix::of({{std::log(2.0), 0, 7}})), mask_two);
  CHECK(t.value(v)(0, 0) == Catch::Approx(2.0 / 3.0).margin(1e-15));
  CHECK(t.value(v)(0, 1) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(t.value(v)(0, 2) == 0.0);
}

TEST_CASE("masked row softmax rejects an all-masked row", "[numeric]") {
  Tape t;
  Matrix mask = Matrix::of({{0, 0}, {kNegInf, kNegInf}});
  CHECK_THROWS_AS(t.masked_softmax_rows(t.input(Matrix(2, 2)), mask),
                  DegenerateRowError);
}

TEST_CASE("masked row softmax rows sum to one, masked entries exactly zero",
          "[numeric]") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.index(8), c = 1 + rng.index(8);
    Matrix logits = oracles::random_matrix(r, c, rng, -5.0, 5.0);
    Matrix mask(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j)
        mask(i, j) = rng.uniform() < 0.4 ? kNegInf : 0.0;
      mask(i, rng.index(c)) = 0.0;  // keep every row viable
    }
    Tape t;
    const Matrix& p = t.value(t.masked_softmax_rows(t.input(logits), mask));
    for (std::size_t i = 0; i < r; ++i) {
      double row_sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (mask(i, j) != 0.0) CHECK(p(i, j) == 0.0);
        row_sum += p(i, j);
      }
      CHECK(std::fabs(row_sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("activations: analytic points", "[numeric]") {
  Tape t;
  const Matrix& r =
      t.value(t.activation(t.input(Matrix::of({{-1, 0, 2}})), Act::kRelu));
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 2.0);
  CHECK(silu(0.0) == 0.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("activation gradients match finite differences", "[numeric]") {
  Rng rng(15);
  for (Act kind : {Act::kSilu, Act::kSigmoid, Act::kRelu}) {
    Matrix init = oracles::random_matrix(3, 3, rng);
    if (kind == Act::kRelu)  // keep clear of the kink
      for (std::size_t i = 0; i < init.size(); ++i)
        if (std::fabs(init.data()[i]) < 0.05) init.data()[i] = 0.5;
    Param x(init);
    Matrix w = oracles::random_matrix(3, 3, rng);
    const double err = check_expression(
        [&](Tape& t) { return t.weighted_sum(t.activation(t.param(x), kind), w); },
        {{"x", &x}});
    CHECK(err < 1e-6);
  }
}

TEST_CASE("layer norm analytic cases", "[numeric]") {
  Param gain(Matrix::of({{1, 1}}));
  Param bias(Matrix::of({{0, 0}}));
  Tape t;
  Tape::Var g = t.param(gain), b = t.param(bias);
  const Matrix& constant =
      t.value(t.layer_norm(t.input(Matrix::of({{3, 3}})), g, b, 1e-5));
  CHECK(constant(0, 0) == 0.0);
  CHECK(constant(0, 1) == 0.0);

  const Matrix& two =
      t.value(t.layer_norm(t.input(Matrix::of({{1, 3}})), g, b, 1e-12));
  CHECK(two(0, 0) == Catch::Approx(-1.0).margin(1e-9));
  CHECK(two(0, 1) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("layer norm gradients match finite differences", "[numeric]") {
  Rng rng(16);
  Param x(oracles::random_matrix(4, 6, rng));
  Param gain(oracles::random_matrix(1, 6, rng, 0.5, 1.5));
  Param bias(oracles::random_matrix(1, 6, rng, -0.3, 0.3));
  Matrix w = oracles::random_matrix(4, 6, rng);
  const double err = check_expression(
      [&](Tape& t) {
        return t.weighted_sum(
            t.layer_norm(t.param(x), t.param(gain), t.param(bias), 1e-5), w);
      },
      {{"x", &x}, {"gain", &gain}, {"bias", &bias}});
  CHECK(err < 1e-6);
}

TEST_CASE("every tape op passes finite differences on random shapes", "[numeric]") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.index(8), c = 1 + rng.index(8),
                      k = 1 + rng.index(8);
    Param a(oracles::random_matrix(r, c, rng));
    Param b(oracles::random_matrix(c, k, rng));
    Param same(oracles::random_matrix(r, c, rng));
    Param row(oracles::random_matrix(1, c, rng));
    Matrix w_rc = oracles::random_matrix(r, c, rng);
    Matrix w_rk = oracles::random_matrix(r, k, rng);
    Matrix w_cr = oracles::random_matrix(c, r, rng);
    Matrix mask(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j)
        mask(i, j) = rng.uniform() < 0.3 ? kNegInf : 0.0;
      mask(i, rng.index(c)) = 0.0;
    }

    std::vector<NamedParam> ab = {{"a", &a}, {"b", &b}};
    CHECK(check_expression(
              [&](Tape& t) {
                return t.weighted_sum(t.matmul(t.param(a), t.param(b)), w_rk);
              },
              ab) < 1e-6);
    std::vector<NamedParam> a_same = {{"a", &a}, {"same", &same}};
    CHECK(check_expression(
              [&](Tape& t) {
                return t.weighted_sum(t.add(t.param(a), t.param(same)), w_rc);
              },
              a_same) < 1e-6);
    std::vector<NamedParam> a_row = {{"a", &a}, {"row", &row}};
    CHECK(check_expression(
              [&](Tape& t) {
                return t.weighted_sum(t.add_row(t.param(a), t.param(row)), w_rc);
              },
              a_row) < 1e-6);
    std::vector<NamedParam> only_a = {{"a", &a}};
    CHECK(check_expression(
              [&](Tape& t) { return t.weighted_sum(t.transpose(t.param(a)), w_cr); },
              only_a) < 1e-6);
    CHECK(check_expression(
              [&](Tape& t) { return t.weighted_sum(t.scale(t.param(a), -1.7), w_rc); },
              only_a) < 1e-6);
    CHECK(check_expression(
              [&](Tape& t) {
                return t.weighted_sum(t.softmax_rows(t.param(a)), w_rc);
              },
              only_a) < 1e-6);
    CHECK(check_expression(
              [&](Tape& t) {
                return t.weighted_sum(t.masked_softmax_rows(t.param(a), mask), w_rc);
              },
              only_a) < 1e-6);
    CHECK(check_expression(
              [&](Tape& t) {
                Matrix w2(2 * r, c);
                for (std::size_t i = 0; i < w2.size(); ++i) w2.data()[i] = w_rc.data()[i % w_rc.size()];
                return t.weighted_sum(t.concat_rows(t.param(a), t.param(same)), w2);
              },
              a_same) < 1e-6);
    CHECK(check_expression(
              [&](Tape& t) {
                Matrix w2(r, 2 * c);
                for (std::size_t i = 0; i < w2.size(); ++i) w2.data()[i] = w_rc.data()[i % w_rc.size()];
                return t.weighted_sum(t.concat_cols({t.param(a), t.param(same)}), w2);
              },
              a_same) < 1e-6);
    CHECK(check_expression(
              [&](Tape& t) {
                Matrix w1 = oracles::random_matrix(1, c, rng);
                return t.weighted_sum(t.mean_rows(t.param(a), 0, r), w1);
              },
              only_a) < 1e-6);
    CHECK(check_expression([&](Tape& t) { return t.sum(t.param(a)); }, only_a) <
          1e-6);
  }
}

TEST_CASE("bce-with-logit gradient and values", "[numeric]") {
  Param z(Matrix::of({{0.7}}));
  const double err = check_expression(
      [&](Tape& t) { return t.bce_with_logit(t.param(z), 1.0); }, {{"z", &z}});
  CHECK(err < 1e-6);

  Tape t;
  CHECK(t.scalar(t.bce_with_logit(t.input(Matrix::of({{0.0}})), 1.0)) ==
        Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("grad_check on theta squared", "[numeric]") {
  Param theta(Matrix::of({{3.0}}));
  auto fn = [&](bool with_grad) {
    Tape t;
    Tape::Var v = t.param(theta);
    Tape::Var out = t.matmul(v, v);
    const double val = t.scalar(out);
    if (with_grad) t.backward(out);
    return val;
  };
  GradCheckReport rep = grad_check(fn, {{"theta", &theta}}, 1e-5);
  CHECK(rep.entries_checked == 1);
  CHECK(rep.worst_analytic == Catch::Approx(6.0).margin(1e-12));
  CHECK(rep.worst_numeric == Catch::Approx(6.0).margin(1e-8));
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("grad_check reports frozen params with exactly zero gradient",
          "[numeric]") {
  Param theta(Matrix::of({{2.0}}));
  Param frozen(Matrix::of({{5.0}}), false);
  auto fn = [&](bool with_grad) {
    Tape t;
    Tape::Var out = t.matmul(t.param(theta), t.param(frozen));
    const double val = t.scalar(out);
    if (with_grad) t.backward(out);
    return val;
  };
  GradCheckReport rep = grad_check(fn, {{"theta", &theta}, {"frozen", &frozen}}, 1e-5);
  CHECK(rep.frozen_grads_zero);
  CHECK(max_abs(frozen.grad) == 0.0);
  CHECK(theta.grad(0, 0) == Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("grad_check aborts on a non-finite loss", "[numeric]") {
  Param theta(Matrix::of({{1.0}}));
  auto fn = [&](bool) { return std::numeric_limits<double>::quiet_NaN(); };
  GradCheckReport rep = grad_check(fn, {{"theta", &theta}}, 1e-5);
  CHECK(rep.aborted);
  CHECK_FALSE(rep.diagnostic.empty());
}

TEST_CASE("grad_check validates the step size", "[numeric]") {
  Param theta(Matrix::of({{1.0}}));
  auto fn = [&](bool) { return 0.0; };
  CHECK_THROWS_AS(grad_check(fn, {{"theta", &theta}}, 1e-9), ConfigError);
  CHECK_THROWS_AS(grad_check(fn, {{"theta", &theta}}, 1e-2), ConfigError);
}

TEST_CASE("params that do not influence the loss keep zero grads", "[numeric]") {
  Param used(Matrix::of({{2.0}}));
  Param unused(Matrix::of({{4.0}}));
  Tape t;
  Tape::Var out = t.matmul(t.param(used), t.param(used));
  t.param(unused);
  used.zero_grad();
  unused.zero_grad();
  t.backward(out);
  CHECK(max_abs(unused.grad) == 0.0);
  CHECK(used.grad(0, 0) == Catch::Approx(4.0).margin(1e-12));
  CHECK_THROWS_AS(t.backward(out), Error);  // tape replays once
}
