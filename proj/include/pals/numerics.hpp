#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pals {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Index = Eigen::Index;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] void throw_shape(std::string_view op, Index ar, Index ac, Index br, Index bc);
}  // namespace detail

/// Dense product with a fixed reduction order: each output entry accumulates
/// a(i,0)b(0,j), a(i,1)b(1,j), ... left to right, so the result is
/// bit-identical to the textbook triple loop.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) detail::throw_shape("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  const MatrixX<Scalar> lhs = a;
  const MatrixX<Scalar> rhs = b;
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(lhs.rows(), rhs.cols());
  for (Index i = 0; i < lhs.rows(); ++i) {
    for (Index k = 0; k < lhs.cols(); ++k) {
      const Scalar aik = lhs(i, k);
      out.row(i) += aik * rhs.row(k);
    }
  }
  return out;
}

/// a * b^T
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul_nt(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.cols()) detail::throw_shape("matmul_nt", a.rows(), a.cols(), b.rows(), b.cols());
  return matmul(a, MatrixX<typename DerivedA::Scalar>(b.transpose()));
}

/// a^T * b
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul_tn(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows()) detail::throw_shape("matmul_tn", a.rows(), a.cols(), b.rows(), b.cols());
  return matmul(MatrixX<typename DerivedA::Scalar>(a.transpose()), b);
}

// ---------------------------------------------------------------------------
// Differentiable primitives. Rows of `x` are samples (or tokens); weights are
// stored out x in, so an affine map is y = x w^T + b.

Matrix affine_forward(const Matrix& x, const Matrix& w, const RowVector& b);

struct AffineGrads {
  Matrix grad_x;
  Matrix grad_w;
  RowVector grad_b;
};

AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& upstream);

/// Row-wise softmax with max subtraction.
Matrix softmax_forward(const Matrix& x);
/// Gradient w.r.t. the softmax input, given the forward output `y`.
Matrix softmax_backward(const Matrix& y, const Matrix& upstream);

Matrix relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& upstream);

struct LayerNormCache {
  Matrix normalized;     // (x - mean) / sqrt(var + eps), before scale/shift
  Eigen::VectorXd inv_std;
};

struct LayerNormGrads {
  Matrix grad_x;
  RowVector grad_gamma;
  RowVector grad_beta;
};

Matrix layernorm_forward(const Matrix& x, const RowVector& gamma, const RowVector& beta,
                         LayerNormCache& cache, double eps = 1e-5);
LayerNormGrads layernorm_backward(const LayerNormCache& cache, const RowVector& gamma,
                                  const Matrix& upstream);

// ---------------------------------------------------------------------------
// Parameters and Adam.

/// A trainable tensor with its gradient buffer and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;

  Parameter() = default;
  Parameter(std::string name_, Matrix init);

  void zero_grad() { grad.setZero(); }
  void reset_moments() {
    first_moment.setZero();
    second_moment.setZero();
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update. `step` is the 1-based optimizer step
/// shared by all parameters. Masked-out entries are not special-cased here;
/// the caller re-applies the mask afterwards.
void adam_step(Parameter& param, const AdamConfig& config, std::int64_t step);

bool all_finite(const Matrix& m);

}  // namespace pals
