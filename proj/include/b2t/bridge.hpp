// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/layers.hpp"
#include "b2t/tensor.hpp"

#include <string>

namespace b2t {

/// Linear map from extractor features into the decoder's token-embedding
/// space: E = Z M + M0, one row per feature step.
struct Bridge {
  Matrix M;   // F_b × D
  Matrix M0;  // 1 × D

  /// M ~ uniform(-1/sqrt(F_b), 1/sqrt(F_b)), M0 = 0.
  static Bridge create(int feature_dim, int embed_dim, Rng& rng);

  int feature_dim() const { return static_cast<int>(M.rows()); }
  int embed_dim() const { return static_cast<int>(M.cols()); }

  Matrix project(const Matrix& z) const;
  /// Returns dL/dZ; accumulates dL/dM and dL/dM0 into `grads` unless null.
  Matrix backward(const Matrix& z, const Matrix& de, Bridge* grads) const;

  Bridge zeros_like() const { return {b2t::zeros_like(M), b2t::zeros_like(M0)}; }
  void named_params(const std::string& prefix, ParamRefs& out) {
    out.push_back({prefix + ".M", &M});
    out.push_back({prefix + ".M0", &M0});
  }
};

}  // namespace b2t
