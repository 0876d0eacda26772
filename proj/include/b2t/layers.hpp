// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/tensor.hpp"

#include <cmath>
#include <string>

namespace b2t {

/// Affine map y = x W + b, with an optional low-rank adapter
/// y += scale * (x A) B. Weight is in×out, bias 1×out.
struct Linear {
  Matrix weight;
  Matrix bias;
  Matrix lora_a;  // in×r, empty when detached
  Matrix lora_b;  // r×out
  double lora_scale = 0.0;

  static Linear create(int in, int out, Rng& rng);
  static Linear identity(int dim);

  bool has_lora() const { return lora_a.size() > 0; }
  int in_dim() const { return static_cast<int>(weight.rows()); }
  int out_dim() const { return static_cast<int>(weight.cols()); }

  Matrix forward(const Matrix& x) const;
  /// Returns dL/dx. Parameter gradients are accumulated into `grads` unless null.
  Matrix backward(const Matrix& x, const Matrix& dy, Linear* grads) const;

  Linear zeros_like() const;
  void named_params(const std::string& prefix, ParamRefs& out);
};

/// Layer normalization over the last dimension.
struct LayerNormTrace {
  Matrix xhat;
  RowVector inv_std;  // per row, stored as a row vector of length rows
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormTrace* trace);
Matrix layer_norm_backward(const LayerNormTrace& trace, const Matrix& gain, const Matrix& dy, Matrix* dgain,
                           Matrix* dbias);

/// tanh-approximated GELU and its derivative.
Matrix gelu(const Matrix& x);
Matrix gelu_grad(const Matrix& x);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace b2t
