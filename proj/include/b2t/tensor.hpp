// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace b2t {

/// Row-major dense matrix used for signals, activations and parameters.
/// Bias vectors are stored as 1×n matrices so every parameter has one type.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

struct NamedParam {
  std::string name;
  Matrix* value;
};
using ParamRefs = std::vector<NamedParam>;

inline Matrix zeros_like(const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()); }

/// Fills `m` with draws from uniform(-bound, bound).
inline void fill_uniform(Matrix& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

/// Row-wise log-softmax.
Matrix log_softmax_rows(const Matrix& logits);

/// Deterministic 64-bit mixing of several integers into one seed
/// (splitmix64 finalizer), used to derive independent per-trial RNG streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

/// Lowercase hex SHA-256 of a byte buffer.
std::string sha256_hex(const void* data, std::size_t size);

/// SHA-256 over the raw little-endian float64 bytes of a matrix.
std::string content_hash(const Matrix& m);

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace b2t
