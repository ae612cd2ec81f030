#include "pals/models.hpp"

#include <cmath>

namespace pals {

MiniTransformer::MiniTransformer(const ModelConfig& config, Rng& rng) : ForecastModel(config) {
  const Index m = config_.variables;
  const Index d = config_.d_model;
  const Index f = config_.d_ff;
  const Index out = config_.horizon * config_.variables;

  add_sparse("embed.weight", d, m, rng);
  add_sparse("attn.query.weight", d, d, rng);
  add_sparse("attn.key.weight", d, d, rng);
  add_sparse("attn.value.weight", d, d, rng);
  add_sparse("attn.out.weight", d, d, rng);
  add_sparse("ffn.0.weight", f, d, rng);
  add_sparse("ffn.1.weight", d, f, rng);
  add_sparse("readout.weight", out, d, rng);

  add_dense("embed.bias", uniform_init(1, d, m, rng));
  Matrix position(config_.lookback, d);
  for (Index i = 0; i < position.size(); ++i) position.data()[i] = 0.02 * rng.normal();
  add_dense("embed.position", std::move(position));
  add_dense("attn.query.bias", uniform_init(1, d, d, rng));
  add_dense("attn.key.bias", uniform_init(1, d, d, rng));
  add_dense("attn.value.bias", uniform_init(1, d, d, rng));
  add_dense("attn.out.bias", uniform_init(1, d, d, rng));
  add_dense("norm1.gamma", Matrix::Ones(1, d));
  add_dense("norm1.beta", Matrix::Zero(1, d));
  add_dense("ffn.0.bias", uniform_init(1, f, d, rng));
  add_dense("ffn.1.bias", uniform_init(1, d, f, rng));
  add_dense("norm2.gamma", Matrix::Ones(1, d));
  add_dense("norm2.beta", Matrix::Zero(1, d));
  add_dense("readout.bias", uniform_init(1, out, d, rng));
}

Batch MiniTransformer::forward(const Batch& inputs) {
  const Index L = config_.lookback;
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
  cache_.assign(inputs.size(), Cache{});
  Batch outputs(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const Matrix& x = inputs[b];
    if (x.rows() != L || x.cols() != config_.variables) {
      detail::throw_shape("MiniTransformer input", x.rows(), x.cols(), L, config_.variables);
    }
    Cache& c = cache_[b];
    c.x = x;
    c.e = affine_forward(x, weight(kEmbed), dense(kEmbedBias)) + dense(kPosition);
    c.q = affine_forward(c.e, weight(kQuery), dense(kQueryBias));
    c.k = affine_forward(c.e, weight(kKey), dense(kKeyBias));
    c.v = affine_forward(c.e, weight(kValue), dense(kValueBias));
    c.attn = softmax_forward(scale * matmul_nt(c.q, c.k));
    c.z = matmul(c.attn, c.v);
    const Matrix r1 = c.e + affine_forward(c.z, weight(kAttnOut), dense(kAttnOutBias));
    c.n1 = layernorm_forward(r1, dense(kNorm1Gamma), dense(kNorm1Beta), c.ln1);
    c.ffn_pre = affine_forward(c.n1, weight(kFfn1), dense(kFfn1Bias));
    c.ffn_act = relu_forward(c.ffn_pre);
    const Matrix r2 = c.n1 + affine_forward(c.ffn_act, weight(kFfn2), dense(kFfn2Bias));
    c.n2 = layernorm_forward(r2, dense(kNorm2Gamma), dense(kNorm2Beta), c.ln2);
    const Matrix y = affine_forward(c.n2.bottomRows(1), weight(kReadout), dense(kReadoutBias));
    outputs[b] = Eigen::Map<const Matrix>(y.data(), config_.horizon, config_.variables);
  }
  return outputs;
}

Batch MiniTransformer::backward(const Batch& output_grads) {
  if (output_grads.size() != cache_.size()) throw DimensionError("MiniTransformer backward: batch size differs from forward");
  const Index L = config_.lookback;
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
  Batch input_grads(cache_.size());
  for (std::size_t b = 0; b < cache_.size(); ++b) {
    const Cache& c = cache_[b];
    const Matrix& gy = output_grads[b];
    if (gy.rows() != config_.horizon || gy.cols() != config_.variables) {
      detail::throw_shape("MiniTransformer output grad", gy.rows(), gy.cols(), config_.horizon, config_.variables);
    }
    const Matrix g_out = Eigen::Map<const Matrix>(gy.data(), 1, gy.size());

    // Readout from the last token.
    const Matrix last = c.n2.bottomRows(1);
    AffineGrads ro = affine_backward(last, weight(kReadout), g_out);
    weight_grad(kReadout) += ro.grad_w;
    dense_grad(kReadoutBias) += ro.grad_b;
    Matrix g_n2 = Matrix::Zero(L, config_.d_model);
    g_n2.bottomRows(1) = ro.grad_x;

    // Second residual block.
    const LayerNormGrads ln2 = layernorm_backward(c.ln2, dense(kNorm2Gamma), g_n2);
    dense_grad(kNorm2Gamma) += ln2.grad_gamma;
    dense_grad(kNorm2Beta) += ln2.grad_beta;
    const AffineGrads f2 = affine_backward(c.ffn_act, weight(kFfn2), ln2.grad_x);
    weight_grad(kFfn2) += f2.grad_w;
    dense_grad(kFfn2Bias) += f2.grad_b;
    const Matrix g_pre = relu_backward(c.ffn_pre, f2.grad_x);
    const AffineGrads f1 = affine_backward(c.n1, weight(kFfn1), g_pre);
    weight_grad(kFfn1) += f1.grad_w;
    dense_grad(kFfn1Bias) += f1.grad_b;
    const Matrix g_n1 = ln2.grad_x + f1.grad_x;

    // First residual block.
    const LayerNormGrads ln1 = layernorm_backward(c.ln1, dense(kNorm1Gamma), g_n1);
    dense_grad(kNorm1Gamma) += ln1.grad_gamma;
    dense_grad(kNorm1Beta) += ln1.grad_beta;
    const AffineGrads ao = affine_backward(c.z, weight(kAttnOut), ln1.grad_x);
    weight_grad(kAttnOut) += ao.grad_w;
    dense_grad(kAttnOutBias) += ao.grad_b;

    // Attention.
    const Matrix g_attn = matmul_nt(ao.grad_x, c.v);
    const Matrix g_v = matmul_tn(c.attn, ao.grad_x);
    const Matrix g_scores = scale * softmax_backward(c.attn, g_attn);
    const Matrix g_q = matmul(g_scores, c.k);
    const Matrix g_k = matmul_tn(g_scores, c.q);
    const AffineGrads qg = affine_backward(c.e, weight(kQuery), g_q);
    const AffineGrads kg = affine_backward(c.e, weight(kKey), g_k);
    const AffineGrads vg = affine_backward(c.e, weight(kValue), g_v);
    weight_grad(kQuery) += qg.grad_w;
    weight_grad(kKey) += kg.grad_w;
    weight_grad(kValue) += vg.grad_w;
    dense_grad(kQueryBias) += qg.grad_b;
    dense_grad(kKeyBias) += kg.grad_b;
    dense_grad(kValueBias) += vg.grad_b;

    // Embedding.
    const Matrix g_e = ln1.grad_x + qg.grad_x + kg.grad_x + vg.grad_x;
    dense_grad(kPosition) += g_e;
    const AffineGrads eg = affine_backward(c.x, weight(kEmbed), g_e);
    weight_grad(kEmbed) += eg.grad_w;
    dense_grad(kEmbedBias) += eg.grad_b;
    input_grads[b] = eg.grad_x;
  }
  return input_grads;
}

std::uint64_t MiniTransformer::flops_per_sample() const {
  const auto L = static_cast<std::uint64_t>(config_.lookback);
  const auto d = static_cast<std::uint64_t>(config_.d_model);
  std::uint64_t token_macs = 0;
  for (std::size_t i : {kEmbed, kQuery, kKey, kValue, kAttnOut, kFfn1, kFfn2}) token_macs += active(i);
  std::uint64_t flops = 2 * L * token_macs + 2 * active(kReadout);
  // Scores and attention-weighted values at dense cost, plus exp / sum / divide
  // for each softmax entry.
  flops += 2 * (2 * L * L * d) + 3 * L * L;
  return flops;
}

double MiniTransformer::min_relu_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& c : cache_) {
    if (c.ffn_pre.size() > 0) margin = std::min(margin, c.ffn_pre.cwiseAbs().minCoeff());
  }
  return margin;
}

}  // namespace pals
