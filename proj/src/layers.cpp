// SPDX-License-Identifier: Apache-2.0
#include "b2t/layers.hpp"

#include <cmath>

namespace b2t {

Linear Linear::create(int in, int out, Rng& rng) {
  Linear l;
  l.weight = Matrix(in, out);
  fill_uniform(l.weight, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  l.bias = Matrix::Zero(1, out);
  return l;
}

Linear Linear::identity(int dim) {
  Linear l;
  l.weight = Matrix::Identity(dim, dim);
  l.bias = Matrix::Zero(1, dim);
  return l;
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight;
  y.rowwise() += bias.row(0);
  if (has_lora()) y.noalias() += lora_scale * ((x * lora_a) * lora_b);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy, Linear* grads) const {
  Matrix dx = dy * weight.transpose();
  if (grads != nullptr) {
    grads->weight.noalias() += x.transpose() * dy;
    grads->bias += dy.colwise().sum();
  }
  if (has_lora()) {
    const Matrix dyb = dy * lora_b.transpose();  // rows×r
    dx.noalias() += lora_scale * (dyb * lora_a.transpose());
    if (grads != nullptr) {
      grads->lora_a.noalias() += lora_scale * (x.transpose() * dyb);
      grads->lora_b.noalias() += lora_scale * ((x * lora_a).transpose() * dy);
    }
  }
  return dx;
}

Linear Linear::zeros_like() const {
  Linear g;
  g.weight = b2t::zeros_like(weight);
  g.bias = b2t::zeros_like(bias);
  g.lora_a = b2t::zeros_like(lora_a);
  g.lora_b = b2t::zeros_like(lora_b);
  g.lora_scale = lora_scale;
  return g;
}

void Linear::named_params(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
  if (has_lora()) {
    out.push_back({prefix + ".lora_a", &lora_a});
    out.push_back({prefix + ".lora_b", &lora_b});
  }
}

namespace {
constexpr double kLayerNormEps = 1e-5;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormTrace* trace) {
  const double d = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  RowVector inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mean).square().sum() / d;
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std[r];
  }
  Matrix y = (xhat.array().rowwise() * gain.row(0).array()).matrix();
  y.rowwise() += bias.row(0);
  if (trace != nullptr) {
    trace->xhat = std::move(xhat);
    trace->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormTrace& trace, const Matrix& gain, const Matrix& dy, Matrix* dgain,
                           Matrix* dbias) {
  if (dgain != nullptr) *dgain += (dy.array() * trace.xhat.array()).matrix().colwise().sum();
  if (dbias != nullptr) *dbias += dy.colwise().sum();
  const double d = static_cast<double>(dy.cols());
  const Matrix dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_dxhat = dxhat.row(r).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(r).dot(trace.xhat.row(r)) / d;
    dx.row(r) = trace.inv_std[r] *
                (dxhat.row(r).array() - mean_dxhat - trace.xhat.row(r).array() * mean_dxhat_xhat);
  }
  return dx;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
}

Matrix gelu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double u = kGeluC * (v + kGeluA * v * v * v);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
  });
}

}  // namespace b2t
