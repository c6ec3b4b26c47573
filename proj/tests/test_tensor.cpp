#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "graphix/params.hpp"
#include "graphix/tensor.hpp"

using namespace graphix;

TEST_CASE("matmul identity") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix eye = Matrix::from_rows({{1, 0}, {0, 1}});
  CHECK(matmul(a, eye) == a);
  CHECK(matmul(eye, a) == a);
}

TEST_CASE("matmul shape mismatch throws") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(add(Matrix(2, 3), Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("row_softmax of a zero row is uniform") {
  const Matrix s = row_softmax(Matrix(1, 4));
  for (std::size_t c = 0; c < 4; ++c) CHECK(s.at(0, c) == doctest::Approx(0.25));
}

TEST_CASE("row_softmax rows sum to one with entries in (0,1)") {
  Rng rng(7);
  Matrix x(5, 9);
  for (double& v : x.data()) v = rng.uniform(-30.0, 30.0);
  const Matrix s = row_softmax(x);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      sum += s.at(r, c);
      CHECK(s.at(r, c) > 0.0);
      CHECK(s.at(r, c) < 1.0);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("row_softmax rejects non-finite input") {
  Matrix x(1, 2);
  x.at(0, 0) = std::nan("");
  CHECK_THROWS_AS(row_softmax(x), std::domain_error);
}

TEST_CASE("layer_norm of a constant row is zero") {
  const Matrix y = layer_norm(Matrix(2, 6, 3.5), 1e-6);
  for (double v : y.data()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("layer_norm normalizes each row") {
  Rng rng(3);
  Matrix x(4, 8);
  for (double& v : x.data()) v = rng.uniform(-2.0, 2.0);
  const Matrix y = layer_norm(x, 1e-9);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) mean += y.at(r, c);
    mean /= 8.0;
    for (std::size_t c = 0; c < y.cols(); ++c)
      var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    var /= 8.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(layer_norm(x, 0.0), std::invalid_argument);
}

TEST_CASE("relu and concat and transpose basics") {
  const Matrix x = Matrix::from_rows({{-1, 2}, {3, -4}});
  CHECK(relu(x) == Matrix::from_rows({{0, 2}, {3, 0}}));
  CHECK(transpose(x) == Matrix::from_rows({{-1, 3}, {2, -4}}));
  const Matrix c = concat_cols({x, relu(x)});
  CHECK(c.cols() == 4);
  CHECK(c.at(1, 2) == 3.0);
}

TEST_CASE("same seed reproduces bit-identical parameters") {
  Rng a(42), b(42);
  const Matrix ma = xavier_uniform(7, 5, a);
  const Matrix mb = xavier_uniform(7, 5, b);
  CHECK(ma == mb);
  Rng c(43);
  CHECK(xavier_uniform(7, 5, c) != ma);
}

TEST_CASE("grad_check accepts the exact gradient of sum of squares") {
  ParamStore params(0);
  params.add("W", Matrix::from_rows({{0.25, -0.1}, {0.2, 0.05}}));
  std::map<std::string, Matrix> grads;
  Matrix g = params.at("W");
  for (double& v : g.data()) v *= 2.0;
  grads.emplace("W", g);

  const auto f = [](const ParamStore& p) {
    double s = 0.0;
    for (double v : p.at("W").data()) s += v * v;
    return s;
  };
  CHECK(grad_check(f, params, grads, 1e-5) < 1e-8);

  SUBCASE("a gradient scaled by two is reported as ~0.5 error") {
    // analytic becomes 4W against numeric 2W; max |2W| here is 0.5.
    for (auto& [name, m] : grads)
      for (double& v : m.data()) v *= 2.0;
    CHECK(grad_check(f, params, grads, 1e-5) == doctest::Approx(0.5).epsilon(1e-6));
  }
}

TEST_CASE("grad_check validates epsilon range") {
  ParamStore params(0);
  params.add("W", Matrix(1, 1, 1.0));
  std::map<std::string, Matrix> grads{{"W", Matrix(1, 1, 2.0)}};
  const auto f = [](const ParamStore& p) { return p.at("W").at(0, 0); };
  CHECK_THROWS_AS(grad_check(f, params, grads, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(f, params, grads, 1e-2), std::invalid_argument);
}

TEST_CASE("checkpoint save/load round trip is bit exact") {
  ParamStore store(123, "xavier_uniform");
  Rng rng(5);
  store.add("a.W", xavier_uniform(4, 6, rng));
  store.add("b.W", xavier_uniform(2, 2, rng));
  store.meta()["note"] = "round-trip";

  const std::string path = "tensor_ckpt_test.bin";
  store.save(path);
  const ParamStore loaded = ParamStore::load(path);
  std::remove(path.c_str());

  CHECK(loaded.seed() == 123);
  CHECK(loaded.init_tag() == "xavier_uniform");
  CHECK(loaded.names() == store.names());
  CHECK(loaded.at("a.W") == store.at("a.W"));
  CHECK(loaded.at("b.W") == store.at("b.W"));
  CHECK(loaded.meta().at("note") == "round-trip");
}

TEST_CASE("param store rejects duplicates and shape changes") {
  ParamStore store(1);
  store.add("W", Matrix(2, 2));
  CHECK_THROWS_AS(store.add("W", Matrix(2, 2)), std::invalid_argument);
  CHECK_THROWS_AS(store.set("W", Matrix(3, 2)), std::invalid_argument);
  CHECK_THROWS_AS(store.at("missing"), std::out_of_range);
}
