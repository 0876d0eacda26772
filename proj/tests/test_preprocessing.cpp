// SPDX-License-Identifier: Apache-2.0
#include "b2t/preprocessing.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace b2t;

TEST_CASE("block stats are population moments per channel") {
  Matrix a(2, 2), b(1, 2);
  a << 1, 10, 3, 10;
  b << 5, 40;
  const BlockStats st = compute_block_stats("blk", {a, b});
  CHECK(st.mean[0] == doctest::Approx(3.0));
  CHECK(st.mean[1] == doctest::Approx(20.0));
  CHECK(st.std[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(st.std[1] == doctest::Approx(std::sqrt(600.0 / 3.0)));
  CHECK_THROWS(compute_block_stats("empty", {}));
}

TEST_CASE("normalization yields zero mean and unit variance over the block") {
  Rng rng(2);
  std::normal_distribution<double> n(3.0, 2.0);
  std::vector<Matrix> sigs;
  for (int i = 0; i < 3; ++i) {
    Matrix m(10 + i, 4);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng) * (1 + k % 4);
    sigs.push_back(m);
  }
  const BlockStats st = compute_block_stats("b", sigs);
  std::vector<Matrix> normed;
  for (const auto& s : sigs) normed.push_back(normalize(s, st));
  const BlockStats after = compute_block_stats("b", normed);
  for (int c = 0; c < 4; ++c) {
    CHECK(after.mean[c] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(after.std[c] == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(normalize(Matrix::Zero(3, 5), st), ShapeError);
}

TEST_CASE("a constant channel normalizes to zero") {
  const Matrix s = Matrix::Constant(4, 2, 7.0);
  const Matrix out = normalize(s, compute_block_stats("c", {s}));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("smoothing an impulse reproduces the normalized kernel") {
  const double sigma = 2.0;
  const int radius = 6;
  Matrix x = Matrix::Zero(31, 1);
  x(15, 0) = 1.0;
  const Matrix y = gaussian_smooth(x, sigma, radius);
  double z = 0;
  for (int j = -radius; j <= radius; ++j) z += std::exp(-j * j / (2 * sigma * sigma));
  for (int t = 0; t < 31; ++t) {
    const int d = t - 15;
    const double expect = std::abs(d) <= radius ? std::exp(-d * d / (2 * sigma * sigma)) / z : 0.0;
    CHECK(y(t, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("smoothing preserves constants, including at the edges") {
  const Matrix x = Matrix::Constant(5, 3, -2.5);
  const Matrix y = gaussian_smooth(x, 2.0, 6);
  CHECK((y - x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(gaussian_smooth(x, 0.0, 3));
  CHECK_THROWS(gaussian_smooth(x, 1.0, 0));
}

TEST_CASE("white noise has the configured element and channel variances") {
  AugmentationConfig cfg;
  cfg.sigma_element = 0.5;
  cfg.sigma_channel = 0.3;
  Rng rng(11);
  const int reps = 4000, T = 8;
  // Within-trial variance estimates sigma_element^2; variance of per-trial
  // channel means estimates sigma_channel^2 + sigma_element^2 / T.
  double within = 0, mean_sq = 0;
  for (int r = 0; r < reps; ++r) {
    const Matrix n = add_white_noise(Matrix::Zero(T, 1), cfg, rng);
    const double m = n.mean();
    mean_sq += m * m;
    within += (n.array() - m).square().sum() / (T - 1);
  }
  within /= reps;
  mean_sq /= reps;
  CHECK(within == doctest::Approx(0.25).epsilon(0.05));
  CHECK(mean_sq == doctest::Approx(0.09 + 0.25 / T).epsilon(0.08));
}

TEST_CASE("zero noise leaves the signal unchanged and views compose") {
  AugmentationConfig cfg;
  cfg.sigma_element = 0;
  cfg.sigma_channel = 0;
  Rng rng(1);
  Matrix x(6, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  CHECK(add_white_noise(x, cfg, rng) == x);
  const BlockStats st = compute_block_stats("b", {x});
  CHECK((training_view(x, st, cfg, rng) - eval_view(x, st, cfg)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((eval_view(x, st, cfg) - gaussian_smooth(normalize(x, st), 2.0, 6)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(cfg.radius() == 6);
}

TEST_CASE("block stats sidecar round-trips") {
  b2t::testing::TempDir dir;
  Matrix a(3, 2);
  a << 1, 2, 4, 8, 0.5, -1;
  BlockStatsTable table{{"x", compute_block_stats("x", {a})}};
  save_block_stats(table, dir / "s.json");
  const BlockStatsTable back = load_block_stats(dir / "s.json");
  REQUIRE(back.count("x") == 1);
  CHECK(back.at("x").mean == table.at("x").mean);
  CHECK(back.at("x").std == table.at("x").std);
}
