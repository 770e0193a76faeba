#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "braintim/autodiff.hpp"

using namespace braintim;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Matrix m(r, c);
  for (auto& v : m.data()) v = n(rng);
  return m;
}

// Builds a scalar from leaves; compares tape gradients with central
// differences for every leaf entry.
void check_op(const std::vector<Matrix>& inputs, const std::function<Var(Tape&, const std::vector<Var>&)>& f,
              double tol = 1e-6) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
  Var out = f(tape, leaves);
  tape.backward(out);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix g = tape.grad(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        Tape t;
        std::vector<Var> ls;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Matrix m = inputs[j];
          if (j == k) m[i] += delta;
          ls.push_back(t.constant(m));
        }
        return f(t, ls).value()[0];
      };
      const double h = 1e-5;
      const double num = (eval(h) - eval(-h)) / (2 * h);
      ASSERT_NEAR(g[i], num, tol * std::max(1.0, std::abs(num))) << "input " << k << " entry " << i;
    }
  }
}

// sum(X .* W) for a fixed W, written as trace(X W^T), so every output entry
// receives a distinct upstream gradient.
Var probe(Tape& t, Var x) {
  Matrix w(x.value().rows(), x.value().cols());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
  Var prod = t.matmul_bt(x, t.constant(w));
  Var s = t.slice_cols(t.gather_rows(prod, {0}), 0, 1);
  for (std::size_t r = 1; r < prod.value().rows(); ++r) {
    s = t.add(s, t.slice_cols(t.gather_rows(prod, {r}), r, 1));
  }
  return s;
}

}  // namespace

TEST(Tape, MatmulGradients) {
  std::mt19937_64 rng(1);
  check_op({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.matmul(v[0], v[1])); });
  check_op({random_matrix(3, 4, rng), random_matrix(5, 4, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.matmul_bt(v[0], v[1])); });
}

TEST(Tape, ElementwiseAndBroadcastGradients) {
  std::mt19937_64 rng(2);
  check_op({random_matrix(3, 4, rng), random_matrix(3, 4, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.add(v[0], v[1])); });
  check_op({random_matrix(3, 4, rng), random_matrix(1, 4, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.add_row(v[0], v[1])); });
  check_op({random_matrix(3, 4, rng)}, [](Tape& t, const std::vector<Var>& v) { return probe(t, t.scale(v[0], -2.5)); });
  check_op({random_matrix(3, 4, rng)}, [](Tape& t, const std::vector<Var>& v) { return probe(t, t.relu(v[0])); });
  check_op({random_matrix(1, 4, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.repeat_row(v[0], 3)); });
}

TEST(Tape, LayerNormGradients) {
  std::mt19937_64 rng(3);
  check_op({random_matrix(4, 6, rng), random_matrix(1, 6, rng), random_matrix(1, 6, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.layer_norm(v[0], v[1], v[2])); });
}

TEST(Tape, StructuralOpGradients) {
  std::mt19937_64 rng(4);
  check_op({random_matrix(3, 2, rng), random_matrix(3, 3, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.concat_cols({v[0], v[1]})); });
  check_op({random_matrix(2, 3, rng), random_matrix(4, 3, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.concat_rows({v[0], v[1]})); });
  check_op({random_matrix(3, 5, rng)}, [](Tape& t, const std::vector<Var>& v) { return probe(t, t.slice_cols(v[0], 1, 3)); });
  check_op({random_matrix(4, 3, rng)},
           [](Tape& t, const std::vector<Var>& v) { return probe(t, t.gather_rows(v[0], {2, 0, 2})); });
}

TEST(Tape, SoftmaxGradients) {
  std::mt19937_64 rng(5);
  check_op({random_matrix(3, 5, rng)}, [](Tape& t, const std::vector<Var>& v) { return probe(t, t.softmax_rows(v[0])); });
  const bool mask[5] = {true, false, true, true, false};
  check_op({random_matrix(3, 5, rng)},
           [&](Tape& t, const std::vector<Var>& v) { return probe(t, t.softmax_rows(v[0], std::span<const bool>(mask, 5))); });
}

TEST(Tape, MaskedSoftmaxZeroesMaskedKeys) {
  Tape t;
  Matrix x(2, 3);
  x(0, 0) = 1;
  x(0, 1) = 50;
  x(1, 2) = -3;
  const bool mask[3] = {true, false, true};
  const Matrix p = t.softmax_rows(t.constant(x), std::span<const bool>(mask, 3)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(p(r, 1), 0.0);
    EXPECT_NEAR(p(r, 0) + p(r, 2), 1.0, 1e-12);
  }
}

TEST(Tape, CrossEntropyGradientsAndMasking) {
  std::mt19937_64 rng(6);
  check_op({random_matrix(4, 6, rng)},
           [](Tape& t, const std::vector<Var>& v) { return t.cross_entropy(v[0], {1, -1, 5, 0}); });
  Tape t;
  Var x = t.leaf(random_matrix(3, 4, rng));
  Var l = t.cross_entropy(x, {-1, -1, -1});
  EXPECT_EQ(l.value()[0], 0.0);
  t.backward(l);
  const Matrix g = t.grad(x);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, CrossEntropyOfUniformLogitsIsLogN) {
  Tape t;
  const double ce = t.cross_entropy(t.constant(Matrix(3, 29)), {0, 7, 28}).value()[0];
  EXPECT_NEAR(ce, std::log(29.0), 1e-12);
  EXPECT_NEAR(ce, 3.3673, 1e-4);
}

TEST(Tape, CrossEntropyRejectsBadLabels) {
  Tape t;
  Var x = t.constant(Matrix(2, 3));
  EXPECT_THROW(t.cross_entropy(x, {0, 3}), InvalidLabel);
  EXPECT_THROW(t.cross_entropy(x, {0}), ShapeError);
}

TEST(Tape, BackwardStateErrors) {
  Tape t;
  Var x = t.leaf(Matrix(2, 2));
  EXPECT_THROW(t.backward(x), StateError);  // not a scalar
  Var s = t.cross_entropy(x, {0, 1});
  t.backward(s);
  EXPECT_THROW(t.backward(s), StateError);  // already run
  Tape empty;
  EXPECT_THROW(empty.backward(Var{}), StateError);
}

TEST(Tape, ShapeErrors) {
  Tape t;
  Var a = t.constant(Matrix(2, 3));
  Var b = t.constant(Matrix(2, 3));
  EXPECT_THROW(t.matmul(a, b), ShapeError);
  EXPECT_THROW(t.add(a, t.constant(Matrix(3, 2))), ShapeError);
  EXPECT_THROW(t.slice_cols(a, 2, 2), ShapeError);
  EXPECT_THROW(t.gather_rows(a, {2}), ShapeError);
}

TEST(Tape, GradientsAccumulateOverReuse) {
  Tape t;
  Matrix m(1, 1);
  m[0] = 3.0;
  Var x = t.leaf(m);
  Var y = t.add(x, x);
  Var z = t.matmul(y, x);  // 2 x^2
  t.backward(z);
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 12.0);
}
