#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "graphix/autodiff.hpp"
#include "graphix/tensor.hpp"

using namespace graphix;

namespace {

// Builds the graph from leaves and returns the scalar root.
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// Checks d(root)/d(leaf) against central differences for every leaf entry.
void check_grads(std::vector<Matrix> leaves, const Builder& build,
                 double tol = 1e-7) {
  const auto eval = [&](const std::vector<Matrix>& vals) {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& m : vals) vars.push_back(tape.leaf(m));
    return tape.value(build(tape, vars)).at(0, 0);
  };

  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : leaves) vars.push_back(tape.leaf(m));
  const Var root = build(tape, vars);
  tape.backward(root);

  const double eps = 1e-6;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const Matrix analytic = tape.grad(vars[k]);
    for (std::size_t i = 0; i < leaves[k].size(); ++i) {
      const double saved = leaves[k].data()[i];
      leaves[k].data()[i] = saved + eps;
      const double fp = eval(leaves);
      leaves[k].data()[i] = saved - eps;
      const double fm = eval(leaves);
      leaves[k].data()[i] = saved;
      const double numeric = (fp - fm) / (2 * eps);
      const double rel =
          std::abs(analytic.data()[i] - numeric) / std::max(1.0, std::abs(numeric));
      CAPTURE(k);
      CAPTURE(i);
      CHECK(rel < tol);
    }
  }
}

// Reduce any matrix to a scalar with fixed weights so gradients are dense.
Var weigh(Tape& t, Var x) {
  const Matrix& v = t.value(x);
  Matrix left(1, v.rows());
  Matrix right(v.cols(), 1);
  for (std::size_t i = 0; i < left.size(); ++i)
    left.data()[i] = 0.3 + 0.1 * static_cast<double>(i);
  for (std::size_t i = 0; i < right.size(); ++i)
    right.data()[i] = 0.2 - 0.07 * static_cast<double>(i);
  return t.matmul(t.matmul(t.leaf(left), x), t.leaf(right));
}

}  // namespace

TEST_CASE("matmul/add/scale backward") {
  Rng rng(1);
  check_grads({random_matrix(3, 4, rng), random_matrix(4, 2, rng),
               random_matrix(3, 2, rng)},
              [](Tape& t, const std::vector<Var>& v) {
                return weigh(t, t.add(t.scale(t.matmul(v[0], v[1]), 1.7), v[2]));
              });
}

TEST_CASE("add_row broadcast backward") {
  Rng rng(2);
  check_grads({random_matrix(3, 5, rng), random_matrix(1, 5, rng)},
              [](Tape& t, const std::vector<Var>& v) {
                return weigh(t, t.add_row(v[0], v[1]));
              });
}

TEST_CASE("relu backward away from the kink") {
  Rng rng(3);
  Matrix x = random_matrix(4, 4, rng);
  for (double& v : x.data())
    if (std::abs(v) < 0.05) v += 0.1;  // keep clear of the nondifferentiable point
  check_grads({x}, [](Tape& t, const std::vector<Var>& v) {
    return weigh(t, t.relu(v[0]));
  });
}

TEST_CASE("row_softmax backward") {
  Rng rng(4);
  check_grads({random_matrix(3, 6, rng, -2, 2)},
              [](Tape& t, const std::vector<Var>& v) {
                return weigh(t, t.row_softmax(v[0]));
              });
}

TEST_CASE("layer_norm backward") {
  Rng rng(5);
  check_grads({random_matrix(4, 7, rng, -2, 2)},
              [](Tape& t, const std::vector<Var>& v) {
                return weigh(t, t.layer_norm(v[0], 1e-6));
              },
              1e-6);
}

TEST_CASE("transpose/concat/slice backward") {
  Rng rng(6);
  check_grads({random_matrix(3, 4, rng), random_matrix(3, 2, rng)},
              [](Tape& t, const std::vector<Var>& v) {
                const Var cat = t.concat_cols({v[0], v[1]});
                const Var sliced = t.slice_cols(cat, 1, 5);
                return weigh(t, t.transpose(sliced));
              });
}

TEST_CASE("concat_rows/gather_rows backward accumulates duplicates") {
  Rng rng(7);
  check_grads({random_matrix(4, 3, rng), random_matrix(2, 3, rng)},
              [](Tape& t, const std::vector<Var>& v) {
                const Var cat = t.concat_rows({v[0], v[1]});
                return weigh(t, t.gather_rows(cat, {0, 2, 2, 5, 0}));
              });
}

TEST_CASE("segment_mean and expand_rows backward") {
  Rng rng(8);
  check_grads({random_matrix(6, 3, rng)},
              [](Tape& t, const std::vector<Var>& v) {
                const Var pooled = t.segment_mean(v[0], {{0, 2}, {2, 3}, {3, 6}});
                return weigh(t, t.expand_rows(pooled, {2, -1, 0, 0, 1, -1}));
              });
}

TEST_CASE("add_const passes gradient through") {
  Rng rng(9);
  Matrix mask(2, 3);
  mask.at(0, 1) = -5.0;
  check_grads({random_matrix(2, 3, rng)},
              [mask](Tape& t, const std::vector<Var>& v) {
                return weigh(t, t.add_const(v[0], mask));
              });
}

TEST_CASE("cross_entropy value and backward") {
  SUBCASE("uniform logits give log(vocab)") {
    Tape t;
    const Var logits = t.leaf(Matrix(3, 5, 0.42));
    const Var loss = t.cross_entropy(logits, {0, 3, 4}, LossReduction::Mean);
    CHECK(t.value(loss).at(0, 0) == doctest::Approx(std::log(5.0)));
  }
  SUBCASE("large-margin correct logits drive the loss to zero") {
    Matrix logits(1, 4);
    logits.at(0, 2) = 50.0;
    Tape t;
    const Var loss = t.cross_entropy(t.leaf(logits), {2}, LossReduction::Sum);
    CHECK(t.value(loss).at(0, 0) < 1e-12);
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(10);
    check_grads({random_matrix(4, 5, rng, -2, 2)},
                [](Tape& t, const std::vector<Var>& v) {
                  return t.cross_entropy(v[0], {1, 0, 4, 2}, LossReduction::Mean);
                });
  }
  SUBCASE("unknown target id throws") {
    Tape t;
    CHECK_THROWS_AS(t.cross_entropy(t.leaf(Matrix(1, 3)), {7}, LossReduction::Mean),
                    std::out_of_range);
  }
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  const Var x = t.leaf(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("composite chain matches finite differences") {
  Rng rng(11);
  check_grads(
      {random_matrix(3, 4, rng), random_matrix(4, 4, rng), random_matrix(1, 4, rng)},
      [](Tape& t, const std::vector<Var>& v) {
        const Var h = t.layer_norm(
            t.add(v[0], t.relu(t.add_row(t.matmul(v[0], v[1]), v[2]))), 1e-6);
        const Var a = t.row_softmax(t.scale(t.matmul(h, t.transpose(h)), 0.5));
        return t.cross_entropy(t.matmul(a, h), {0, 2, 3}, LossReduction::Mean);
      },
      1e-6);
}
