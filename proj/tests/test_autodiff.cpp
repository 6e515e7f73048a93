#include "hmkg/autodiff.hpp"
#include "hmkg/errors.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace hmkg;
using hmkg::testing::numeric_gradient;
using hmkg::testing::random_matrix;
using hmkg::testing::relative_error;

namespace {

using Builder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

// Reduces the op output to a scalar with a fixed random weighting, then
// compares every input's analytic gradient against central differences.
double worst_op_error(std::vector<ad::Matrix> inputs, const Builder& build, std::uint64_t seed = 1) {
  Rng rng(seed);
  ad::Matrix weight;
  auto evaluate = [&](bool track, std::vector<ad::Var>* vars_out, ad::Tape& tape) {
    std::vector<ad::Var> vars;
    for (const ad::Matrix& m : inputs) vars.push_back(track ? tape.variable(m) : tape.constant(m));
    const ad::Var out = build(tape, vars);
    if (weight.size() == 0) weight = random_matrix(rng, out.rows(), out.cols());
    const ad::Var loss = ad::sum_all(ad::hadamard(out, tape.constant(weight)));
    if (vars_out) *vars_out = vars;
    return loss;
  };
  ad::Tape tape;
  std::vector<ad::Var> vars;
  const ad::Var loss = evaluate(true, &vars, tape);
  tape.backward(loss);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ad::Matrix numeric = numeric_gradient(inputs[i], [&] {
      ad::Tape t;
      return evaluate(false, nullptr, t).value()(0, 0);
    });
    worst = std::max(worst, relative_error(numeric, vars[i].grad()));
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and linear ops match finite differences") {
  Rng rng(3);
  const ad::Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 2), c = random_matrix(rng, 3, 4);
  const ad::Matrix row = random_matrix(rng, 1, 4), d = random_matrix(rng, 5, 4);
  CHECK(worst_op_error({a, b}, [](ad::Tape&, auto& v) { return ad::matmul(v[0], v[1]); }) < 1e-7);
  CHECK(worst_op_error({a, d}, [](ad::Tape&, auto& v) { return ad::matmul_nt(v[0], v[1]); }) < 1e-7);
  CHECK(worst_op_error({a, c}, [](ad::Tape&, auto& v) { return ad::add(v[0], v[1]); }) < 1e-7);
  CHECK(worst_op_error({a, c}, [](ad::Tape&, auto& v) { return ad::sub(v[0], v[1]); }) < 1e-7);
  CHECK(worst_op_error({a, row}, [](ad::Tape&, auto& v) { return ad::add_row(v[0], v[1]); }) < 1e-7);
  CHECK(worst_op_error({a, c}, [](ad::Tape&, auto& v) { return ad::hadamard(v[0], v[1]); }) < 1e-7);
  CHECK(worst_op_error({a}, [](ad::Tape&, auto& v) { return ad::scale(v[0], -2.5); }) < 1e-7);
  CHECK(worst_op_error({a}, [](ad::Tape&, auto& v) { return ad::transpose(v[0]); }) < 1e-7);
  CHECK(worst_op_error({a}, [](ad::Tape&, auto& v) { return ad::tanh(v[0]); }) < 1e-7);
  CHECK(worst_op_error({a}, [](ad::Tape&, auto& v) { return ad::sigmoid(v[0]); }) < 1e-7);
  CHECK(worst_op_error({a}, [](ad::Tape&, auto& v) { return ad::softmax_rows(v[0]); }) < 1e-7);
  CHECK(worst_op_error({a}, [](ad::Tape&, auto& v) { return ad::mean_rows(v[0]); }) < 1e-7);
}

TEST_CASE("structural ops match finite differences") {
  Rng rng(4);
  const ad::Matrix a = random_matrix(rng, 4, 3), b = random_matrix(rng, 4, 2), c = random_matrix(rng, 2, 3);
  const std::vector<ad::Index> rows = {3, 0, 3, 1};
  CHECK(worst_op_error({a}, [&](ad::Tape&, auto& v) { return ad::gather_rows(v[0], rows); }) < 1e-7);
  const std::vector<ad::Index> cols = {0, 2, 1, 1, 2, 0, 0, 0};
  CHECK(worst_op_error({a}, [&](ad::Tape&, auto& v) { return ad::gather_row_entries(v[0], cols, 2); }) < 1e-7);
  const ad::Matrix w = random_matrix(rng, 2, 3), values = random_matrix(rng, 6, 4);
  CHECK(worst_op_error({w, values}, [](ad::Tape&, auto& v) { return ad::segment_weighted_sum(v[0], v[1]); }) <
        1e-7);
  CHECK(worst_op_error({a, b}, [](ad::Tape&, auto& v) {
          const std::vector<ad::Var> parts = {v[0], v[1]};
          return ad::concat_cols(parts);
        }) < 1e-7);
  CHECK(worst_op_error({a, c}, [](ad::Tape&, auto& v) {
          const std::vector<ad::Var> parts = {v[0], v[1]};
          return ad::concat_rows(parts);
        }) < 1e-7);
}

TEST_CASE("a node reused along two paths accumulates both contributions") {
  ad::Tape tape;
  const ad::Var x = tape.variable(ad::Matrix::Constant(1, 1, 3.0));
  const ad::Var y = ad::sum_all(ad::hadamard(x, x));  // x^2
  tape.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("softmax rows sum to one, including extreme logits") {
  ad::Tape tape;
  ad::Matrix logits(3, 4);
  logits << 1000, 0, -1000, 3, 0, 0, 0, 0, -5, 2, 7, 1;
  const ad::Matrix y = ad::softmax_rows(tape.constant(logits)).value();
  for (ad::Index r = 0; r < y.rows(); ++r) CHECK(y.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.allFinite());
}

TEST_CASE("shape mismatches are rejected") {
  ad::Tape tape;
  const ad::Var a = tape.constant(ad::Matrix::Zero(2, 3));
  const ad::Var b = tape.constant(ad::Matrix::Zero(2, 3));
  CHECK_THROWS_AS(ad::matmul(a, b), ShapeError);
  CHECK_THROWS_AS(ad::add(a, tape.constant(ad::Matrix::Zero(3, 2))), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
  const std::vector<ad::Index> bad = {5, 0};
  CHECK_THROWS_AS(ad::gather_rows(a, bad), ShapeError);
}

TEST_CASE("constants receive no gradient") {
  ad::Tape tape;
  const ad::Var c = tape.constant(ad::Matrix::Ones(2, 2));
  const ad::Var x = tape.variable(ad::Matrix::Ones(2, 2));
  tape.backward(ad::sum_all(ad::hadamard(c, x)));
  CHECK(x.grad().isApprox(ad::Matrix::Ones(2, 2)));
  CHECK(c.grad().isZero());
}
