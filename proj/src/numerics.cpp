#include "pals/numerics.hpp"

#include <cmath>
#include <sstream>

namespace pals {

namespace detail {
void throw_shape(std::string_view op, Index ar, Index ac, Index br, Index bc) {
  std::ostringstream msg;
  msg << op << ": incompatible shapes " << ar << "x" << ac << " and " << br << "x" << bc;
  throw DimensionError(msg.str());
}
}  // namespace detail

Matrix affine_forward(const Matrix& x, const Matrix& w, const RowVector& b) {
  if (x.cols() != w.cols()) detail::throw_shape("affine_forward", x.rows(), x.cols(), w.rows(), w.cols());
  if (b.size() != w.rows()) detail::throw_shape("affine_forward(bias)", 1, b.size(), w.rows(), w.cols());
  Matrix y = matmul_nt(x, w);
  y.rowwise() += b;
  return y;
}

AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& upstream) {
  if (upstream.rows() != x.rows() || upstream.cols() != w.rows() || x.cols() != w.cols()) {
    detail::throw_shape("affine_backward", upstream.rows(), upstream.cols(), w.rows(), w.cols());
  }
  AffineGrads g;
  g.grad_x = matmul(upstream, w);
  g.grad_w = matmul_tn(upstream, x);
  g.grad_b = upstream.colwise().sum();
  return g;
}

Matrix softmax_forward(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double shift = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - shift).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

Matrix softmax_backward(const Matrix& y, const Matrix& upstream) {
  if (y.rows() != upstream.rows() || y.cols() != upstream.cols()) {
    detail::throw_shape("softmax_backward", y.rows(), y.cols(), upstream.rows(), upstream.cols());
  }
  Matrix dx(y.rows(), y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    const double dot = y.row(i).dot(upstream.row(i));
    dx.row(i) = (y.row(i).array() * (upstream.row(i).array() - dot)).matrix();
  }
  return dx;
}

Matrix relu_forward(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols()) {
    detail::throw_shape("relu_backward", x.rows(), x.cols(), upstream.rows(), upstream.cols());
  }
  return (x.array() > 0.0).select(upstream, 0.0);
}

Matrix layernorm_forward(const Matrix& x, const RowVector& gamma, const RowVector& beta,
                         LayerNormCache& cache, double eps) {
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    detail::throw_shape("layernorm_forward", x.rows(), x.cols(), 1, gamma.size());
  }
  const auto n = static_cast<double>(x.cols());
  cache.normalized.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).sum() / n;
    const auto centered = (x.row(i).array() - mean).matrix();
    const double var = centered.squaredNorm() / n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    cache.inv_std(i) = inv_std;
    cache.normalized.row(i) = centered * inv_std;
  }
  Matrix y = (cache.normalized.array().rowwise() * gamma.array()).matrix();
  y.rowwise() += beta;
  return y;
}

LayerNormGrads layernorm_backward(const LayerNormCache& cache, const RowVector& gamma,
                                  const Matrix& upstream) {
  const Matrix& xhat = cache.normalized;
  if (upstream.rows() != xhat.rows() || upstream.cols() != xhat.cols()) {
    detail::throw_shape("layernorm_backward", xhat.rows(), xhat.cols(), upstream.rows(), upstream.cols());
  }
  const auto n = static_cast<double>(xhat.cols());
  LayerNormGrads g;
  g.grad_beta = upstream.colwise().sum();
  g.grad_gamma = (upstream.array() * xhat.array()).matrix().colwise().sum();
  g.grad_x.resize(xhat.rows(), xhat.cols());
  for (Index i = 0; i < xhat.rows(); ++i) {
    const RowVector dxhat = (upstream.row(i).array() * gamma.array()).matrix();
    const double sum_dxhat = dxhat.sum();
    const double sum_dxhat_xhat = dxhat.dot(xhat.row(i));
    g.grad_x.row(i) = (cache.inv_std(i) / n) *
                      (n * dxhat.array() - sum_dxhat - xhat.row(i).array() * sum_dxhat_xhat).matrix();
  }
  return g;
}

Parameter::Parameter(std::string name_, Matrix init)
    : name(std::move(name_)),
      value(std::move(init)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      first_moment(Matrix::Zero(value.rows(), value.cols())),
      second_moment(Matrix::Zero(value.rows(), value.cols())) {}

bool all_finite(const Matrix& m) { return m.array().isFinite().all(); }

void adam_step(Parameter& param, const AdamConfig& config, std::int64_t step) {
  if (param.grad.rows() != param.value.rows() || param.grad.cols() != param.value.cols()) {
    detail::throw_shape("adam_step", param.value.rows(), param.value.cols(), param.grad.rows(),
                        param.grad.cols());
  }
  if (!all_finite(param.grad)) {
    throw NumericError("non-finite gradient in parameter '" + param.name + "'");
  }
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  param.first_moment = b1 * param.first_moment + (1.0 - b1) * param.grad;
  param.second_moment = b2 * param.second_moment + (1.0 - b2) * param.grad.cwiseProduct(param.grad);
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
  const double step_size = config.lr / correction1;
  param.value.array() -= step_size * param.first_moment.array() /
                         ((param.second_moment.array() / correction2).sqrt() + config.epsilon);
}

}  // namespace pals
