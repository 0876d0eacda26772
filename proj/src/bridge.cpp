// SPDX-License-Identifier: Apache-2.0
#include "b2t/bridge.hpp"

#include <cmath>

namespace b2t {

Bridge Bridge::create(int feature_dim, int embed_dim, Rng& rng) {
  Bridge b{Matrix(feature_dim, embed_dim), Matrix::Zero(1, embed_dim)};
  fill_uniform(b.M, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  return b;
}

Matrix Bridge::project(const Matrix& z) const {
  if (z.cols() != M.rows()) {
    throw ShapeError("bridge: features have width " + std::to_string(z.cols()) + ", bridge expects " +
                     std::to_string(M.rows()));
  }
  Matrix e = z * M;
  e.rowwise() += M0.row(0);
  return e;
}

Matrix Bridge::backward(const Matrix& z, const Matrix& de, Bridge* grads) const {
  if (grads != nullptr) {
    grads->M.noalias() += z.transpose() * de;
    grads->M0 += de.colwise().sum();
  }
  return de * M.transpose();
}

}  // namespace b2t
