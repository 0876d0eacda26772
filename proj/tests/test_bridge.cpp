// SPDX-License-Identifier: Apache-2.0
#include "b2t/bridge.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace b2t;
using b2t::testing::max_rel_error;
using b2t::testing::numeric_gradient;

TEST_CASE("bridge init follows the fan-in bound with zero offset") {
  Rng rng(1);
  const Bridge b = Bridge::create(16, 8, rng);
  CHECK(b.feature_dim() == 16);
  CHECK(b.embed_dim() == 8);
  CHECK(b.M.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(b.M.cwiseAbs().maxCoeff() > 0.0);
  CHECK(b.M0.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bridge projects each step independently") {
  Rng rng(2);
  Bridge b = Bridge::create(3, 2, rng);
  fill_uniform(b.M0, 1.0, rng);
  Matrix z(2, 3);
  z << 1, 2, 3, -1, 0, 0.5;
  const Matrix e = b.project(z);
  REQUIRE(e.rows() == 2);
  for (int t = 0; t < 2; ++t) {
    for (int d = 0; d < 2; ++d) {
      double v = b.M0(0, d);
      for (int f = 0; f < 3; ++f) v += z(t, f) * b.M(f, d);
      CHECK(e(t, d) == doctest::Approx(v).epsilon(1e-14));
    }
  }
  CHECK(b.project(Matrix::Zero(0, 3)).rows() == 0);
  CHECK_THROWS(b.project(Matrix::Zero(2, 4)));
}

TEST_CASE("bridge gradients match finite differences") {
  Rng rng(3);
  Bridge b = Bridge::create(4, 3, rng);
  fill_uniform(b.M0, 1.0, rng);
  Matrix z(5, 4), w(5, 3);
  fill_uniform(z, 1.0, rng);
  fill_uniform(w, 1.0, rng);
  auto loss = [&] { return b.project(z).array().square().cwiseProduct(w.array()).sum(); };
  const Matrix de = 2 * b.project(z).cwiseProduct(w);
  Bridge grads = b.zeros_like();
  const Matrix dz = b.backward(z, de, &grads);
  CHECK(max_rel_error(dz, numeric_gradient(z, loss)) < 1e-6);
  CHECK(max_rel_error(grads.M, numeric_gradient(b.M, loss)) < 1e-6);
  CHECK(max_rel_error(grads.M0, numeric_gradient(b.M0, loss)) < 1e-6);
  CHECK(b.backward(z, de, nullptr) == dz);
}
