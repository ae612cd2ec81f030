#include "gradcheck.hpp"

#include "pals/numerics.hpp"
#include "pals/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace pals;
using pals::testing::random_matrix;
using pals::testing::relative_error;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k)
      for (Index j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

// max relative error between `analytic` and central differences of
// f = <projection, g(x)> over every entry of x.
double fd_max_error(Matrix& x, const Matrix& analytic, const std::function<double()>& f) {
  double worst = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double saved = x.data()[j];
    x.data()[j] = saved + pals::testing::kFdStep;
    const double up = f();
    x.data()[j] = saved - pals::testing::kFdStep;
    const double down = f();
    x.data()[j] = saved;
    worst = std::max(worst, relative_error(analytic.data()[j], (up - down) / (2 * pals::testing::kFdStep)));
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul matches a naive triple loop bit for bit") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(9));
    const Index k = 1 + static_cast<Index>(rng.below(9));
    const Index m = 1 + static_cast<Index>(rng.below(9));
    const Matrix a = random_matrix(n, k, rng);
    const Matrix b = random_matrix(k, m, rng);
    CHECK(matmul(a, b) == naive_matmul(a, b));
    CHECK(matmul_nt(a, Matrix(b.transpose())) == naive_matmul(a, b));
    CHECK(matmul_tn(Matrix(a.transpose()), b) == naive_matmul(a, b));
  }
}

TEST_CASE("matmul small example and shape errors") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  Matrix b(2, 1);
  b << 5, 6;
  const Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 17.0);
  CHECK(c(1, 0) == 39.0);
  CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), DimensionError);
  CHECK_THROWS_AS(affine_forward(Matrix(1, 3), Matrix(2, 2), RowVector::Zero(2)), DimensionError);
}

TEST_CASE("affine backward matches finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(16));
    const Index in = 1 + static_cast<Index>(rng.below(16));
    const Index out = 1 + static_cast<Index>(rng.below(16));
    Matrix x = random_matrix(n, in, rng);
    Matrix w = random_matrix(out, in, rng);
    Matrix b = random_matrix(1, out, rng);
    const Matrix r = random_matrix(n, out, rng);
    const auto f = [&] { return affine_forward(x, w, b).cwiseProduct(r).sum(); };
    const AffineGrads g = affine_backward(x, w, r);
    CHECK(fd_max_error(x, g.grad_x, f) < 1e-6);
    CHECK(fd_max_error(w, g.grad_w, f) < 1e-6);
    CHECK(fd_max_error(b, g.grad_b, f) < 1e-6);
  }
}

TEST_CASE("softmax rows sum to one and backward matches finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(16));
    const Index d = 1 + static_cast<Index>(rng.below(16));
    Matrix x = random_matrix(n, d, rng, 3.0);
    const Matrix y = softmax_forward(x);
    for (Index i = 0; i < n; ++i) CHECK(std::abs(y.row(i).sum() - 1.0) < 1e-12);
    const Matrix r = random_matrix(n, d, rng);
    const auto f = [&] { return softmax_forward(x).cwiseProduct(r).sum(); };
    CHECK(fd_max_error(x, softmax_backward(y, r), f) < 1e-6);
  }
  Matrix big(1, 3);
  big << 1000.0, 1000.0, -1000.0;
  const Matrix y = softmax_forward(big);
  CHECK(y(0, 0) == doctest::Approx(0.5));
  CHECK(y(0, 2) == 0.0);
}

TEST_CASE("relu backward passes gradient only where the input is positive") {
  Matrix x(1, 4);
  x << -1.0, 0.0, 2.0, 3.0;
  Matrix up(1, 4);
  up << 1.0, 1.0, 1.0, -5.0;
  const Matrix g = relu_backward(x, up);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(0, 2) == 1.0);
  CHECK(g(0, 3) == -5.0);
  CHECK(relu_forward(x)(0, 0) == 0.0);
  CHECK(relu_forward(x)(0, 3) == 3.0);
}

TEST_CASE("layernorm backward matches finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(16));
    const Index d = 2 + static_cast<Index>(rng.below(15));
    Matrix x = random_matrix(n, d, rng);
    Matrix gamma = random_matrix(1, d, rng);
    Matrix beta = random_matrix(1, d, rng);
    const Matrix r = random_matrix(n, d, rng);
    LayerNormCache cache;
    const auto f = [&] {
      LayerNormCache scratch;
      return layernorm_forward(x, gamma, beta, scratch).cwiseProduct(r).sum();
    };
    layernorm_forward(x, gamma, beta, cache);
    const LayerNormGrads g = layernorm_backward(cache, gamma, r);
    CHECK(fd_max_error(x, g.grad_x, f) < 1e-6);
    CHECK(fd_max_error(gamma, g.grad_gamma, f) < 1e-6);
    CHECK(fd_max_error(beta, g.grad_beta, f) < 1e-6);
  }
}

TEST_CASE("layernorm output has zero mean and unit variance per row before scaling") {
  Rng rng(19);
  const Matrix x = random_matrix(4, 8, rng, 5.0);
  LayerNormCache cache;
  const Matrix y = layernorm_forward(x, RowVector::Ones(8), RowVector::Zero(8), cache);
  for (Index i = 0; i < 4; ++i) {
    CHECK(std::abs(y.row(i).mean()) < 1e-12);
    CHECK(y.row(i).squaredNorm() / 8.0 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("adam") {
  AdamConfig config;
  SUBCASE("zero gradient leaves the value unchanged") {
    Parameter p("w", Matrix::Constant(2, 2, 0.5));
    for (int t = 1; t <= 10; ++t) adam_step(p, config, t);
    CHECK(p.value == Matrix::Constant(2, 2, 0.5));
  }
  SUBCASE("first step moves each entry by lr against the gradient sign") {
    Parameter p("w", Matrix::Zero(1, 2));
    p.grad << 3.0, -0.2;
    adam_step(p, config, 1);
    CHECK(p.value(0, 0) == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(1e-4).epsilon(1e-6));
  }
  SUBCASE("deterministic over many steps") {
    Rng a(3);
    Parameter p("w", Matrix::Zero(3, 3));
    Parameter q("w", Matrix::Zero(3, 3));
    for (int t = 1; t <= 100; ++t) {
      p.grad = random_matrix(3, 3, a);
      q.grad = p.grad;
      adam_step(p, config, t);
      adam_step(q, config, t);
    }
    CHECK(p.value == q.value);
    CHECK(p.first_moment == q.first_moment);
  }
  SUBCASE("non-finite gradient names the parameter") {
    Parameter p("layer0.weight", Matrix::Zero(1, 1));
    p.grad(0, 0) = std::nan("");
    CHECK_THROWS_WITH_AS(adam_step(p, config, 1), doctest::Contains("layer0.weight"), NumericError);
  }
}

TEST_CASE("rng streams are reproducible and roughly standard") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(1);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = c.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(c.below(7) < 7);
  }
}
