// SPDX-License-Identifier: Apache-2.0
#include "b2t/feature_extractor.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace b2t;
using b2t::testing::max_rel_error;
using b2t::testing::numeric_gradient;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  fill_uniform(m, scale, rng);
  return m;
}

/// Reference GRU step written from the gate equations.
RowVector gru_step(const GruCell& c, const RowVector& x, const RowVector& h) {
  const int H = c.hidden();
  RowVector out(H);
  for (int j = 0; j < H; ++j) {
    auto gate = [&](int g) {
      double a = c.b_ih(0, g * H + j), b = c.b_hh(0, g * H + j);
      for (Eigen::Index i = 0; i < x.size(); ++i) a += x[i] * c.w_ih(i, g * H + j);
      for (int i = 0; i < H; ++i) b += h[i] * c.w_hh(i, g * H + j);
      return std::pair{a, b};
    };
    const auto [ra, rb] = gate(0);
    const auto [za, zb] = gate(1);
    const auto [na, nb] = gate(2);
    const double r = 1 / (1 + std::exp(-(ra + rb)));
    const double z = 1 / (1 + std::exp(-(za + zb)));
    const double n = std::tanh(na + r * nb);
    out[j] = (1 - z) * n + z * h[j];
  }
  return out;
}

FeatureExtractorConfig small_config(bool bidirectional) {
  FeatureExtractorConfig c;
  c.input_channels = 3;
  c.num_layers = 2;
  c.hidden = 4;
  c.bidirectional = bidirectional;
  c.stack_k = 2;
  c.stack_s = 1;
  return c;
}

}  // namespace

TEST_CASE("stack_frames concatenates strided windows") {
  Matrix x(5, 2);
  x << 0, 1, 10, 11, 20, 21, 30, 31, 40, 41;
  Matrix expect(2, 4);
  expect << 0, 1, 10, 11, 20, 21, 30, 31;
  CHECK(stack_frames(x, 2, 2) == expect);
  CHECK(stack_frames(x, 3, 1).rows() == 3);
  CHECK(stack_frames(x, 5, 4).rows() == 1);
  CHECK_THROWS_AS(stack_frames(x, 6, 1), SequenceTooShort);

  FeatureExtractorConfig c;
  c.stack_k = 4;
  c.stack_s = 2;
  for (int T = 0; T < 20; ++T) {
    const int expect_rows = T < 4 ? 0 : static_cast<int>(stack_frames(Matrix::Zero(T, 1), 4, 2).rows());
    CHECK(c.stacked_length(T) == expect_rows);
  }
}

TEST_CASE("gru forward matches the gate equations in both directions") {
  Rng rng(7);
  const GruCell cell = GruCell::create(3, 4, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix fwd = gru_forward(cell, x, false, nullptr);
  const Matrix bwd = gru_forward(cell, x, true, nullptr);
  RowVector h = RowVector::Zero(4);
  for (int t = 0; t < 5; ++t) {
    h = gru_step(cell, x.row(t), h);
    CHECK((fwd.row(t) - h).cwiseAbs().maxCoeff() < 1e-12);
  }
  h = RowVector::Zero(4);
  for (int t = 4; t >= 0; --t) {
    h = gru_step(cell, x.row(t), h);
    CHECK((bwd.row(t) - h).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gru backward matches finite differences") {
  Rng rng(8);
  for (bool reverse : {false, true}) {
    GruCell cell = GruCell::create(3, 4, rng);
    Matrix x = random_matrix(4, 3, rng);
    const Matrix w = random_matrix(4, 4, rng);
    auto loss = [&] { return gru_forward(cell, x, reverse, nullptr).cwiseProduct(w).sum(); };
    GruTrace tr;
    gru_forward(cell, x, reverse, &tr);
    GruCell grads = cell.zeros_like();
    const Matrix dx = gru_backward(cell, tr, w, grads);
    CHECK(max_rel_error(dx, numeric_gradient(x, loss)) < 1e-6);
    CHECK(max_rel_error(grads.w_ih, numeric_gradient(cell.w_ih, loss)) < 1e-6);
    CHECK(max_rel_error(grads.w_hh, numeric_gradient(cell.w_hh, loss)) < 1e-6);
    CHECK(max_rel_error(grads.b_ih, numeric_gradient(cell.b_ih, loss)) < 1e-6);
    CHECK(max_rel_error(grads.b_hh, numeric_gradient(cell.b_hh, loss)) < 1e-6);
  }
}

TEST_CASE("day layers start as the identity") {
  Rng rng(3);
  for (bool bi : {false, true}) {
    const FeatureExtractor fe = FeatureExtractor::create(small_config(bi), {"s1", "s2"}, rng);
    const Matrix x = random_matrix(9, 3, rng);
    const Matrix base = fe.forward_without_day_layer(x);
    CHECK(base.rows() == 8);
    CHECK(base.cols() == (bi ? 8 : 4));
    CHECK(fe.forward(x, "s1") == base);
    CHECK(fe.forward(x, "s2") == base);
  }
}

TEST_CASE("unknown sessions fail unless averaging is enabled") {
  Rng rng(4);
  FeatureExtractor fe = FeatureExtractor::create(small_config(false), {"s1", "s2"}, rng);
  const Matrix x = random_matrix(6, 3, rng);
  CHECK_THROWS_WITH(fe.forward(x, "s9"), "unknown session: s9");
  fe.day_layers.at("s1").weight *= 2.0;
  fe.config.average_unknown_session = true;
  ExtractorTrace tr;
  const Matrix out = fe.forward(x, "s9", &tr);
  CHECK(tr.used_fallback);
  // The average of W and 2W is 1.5W.
  FeatureExtractor manual = fe;
  manual.day_layers.at("s1").weight *= 0.75;
  CHECK((out - manual.forward(x, "s1")).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(fe.forward(Matrix::Zero(6, 4), "s1"), ShapeError);
}

TEST_CASE("extractor backward matches finite differences") {
  Rng rng(5);
  FeatureExtractor fe = FeatureExtractor::create(small_config(true), {"s1"}, rng);
  for (auto& [id, layer] : fe.day_layers) fill_uniform(layer.weight, 0.5, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix w = random_matrix(4, 8, rng);
  auto loss = [&] { return fe.forward(x, "s1").cwiseProduct(w).sum(); };
  ExtractorTrace tr;
  fe.forward(x, "s1", &tr);
  FeatureExtractor grads = fe.zeros_like();
  fe.backward(tr, w, grads);
  CHECK(max_rel_error(grads.day_layers.at("s1").weight, numeric_gradient(fe.day_layers.at("s1").weight, loss)) <
        1e-5);
  CHECK(max_rel_error(grads.cells[3].w_hh, numeric_gradient(fe.cells[3].w_hh, loss)) < 1e-5);
  CHECK(max_rel_error(grads.cells[0].b_ih, numeric_gradient(fe.cells[0].b_ih, loss)) < 1e-5);
}

TEST_CASE("ctc loss hand values") {
  // Uniform over {blank, a}: one frame emits "a" with p = 1/2.
  CHECK(ctc_loss(Matrix::Zero(1, 2), {1}) == doctest::Approx(std::log(2.0)));
  // Two frames: paths aa, _a, a_ give 3/4.
  CHECK(ctc_loss(Matrix::Zero(2, 2), {1}) == doctest::Approx(-std::log(0.75)));
  // "aa" needs a separating blank: only a_a out of 8 paths.
  CHECK(ctc_loss(Matrix::Zero(3, 2), {1, 1}) == doctest::Approx(std::log(8.0)));
}

TEST_CASE("ctc loss matches path enumeration and finite differences") {
  Rng rng(6);
  const std::vector<LabelSequence> targets{{1}, {2, 1}, {1, 1}, {2, 2, 1}};
  for (const auto& target : targets) {
    for (int T = ctc_min_frames(target); T <= 5; ++T) {
      Matrix logits = random_matrix(T, 3, rng, 2.0);
      Matrix grad;
      const double loss = ctc_loss(logits, target, &grad);
      CHECK(loss == doctest::Approx(-std::log(b2t::testing::ctc_brute_force_probability(logits, target)))
                        .epsilon(1e-10));
      const Matrix fd = numeric_gradient(logits, [&] { return ctc_loss(logits, target); });
      CHECK(max_rel_error(grad, fd) < 1e-5);
    }
  }
}

TEST_CASE("ctc rejects empty and infeasible targets") {
  CHECK(ctc_min_frames({1, 1, 2}) == 4);
  CHECK(ctc_min_frames({1, 2, 3}) == 3);
  CHECK_THROWS_AS(ctc_loss(Matrix::Zero(3, 3), {}), std::invalid_argument);
  CHECK_THROWS_AS(ctc_loss(Matrix::Zero(3, 3), {1, 1, 2}), NoValidAlignment);
  CHECK_THROWS_AS(ctc_loss(Matrix::Zero(3, 3), {3}), std::exception);
}

TEST_CASE("greedy ctc decoding collapses repeats and drops blanks") {
  Matrix logits(7, 3);
  logits << 0, 5, 0,  //
      0, 5, 0,        //
      5, 0, 0,        //
      0, 5, 0,        //
      0, 0, 5,        //
      1, 1, 1,        // tie resolves to blank
      0, 0, 5;
  CHECK(ctc_greedy_decode(logits) == LabelSequence{1, 1, 2, 2});
}
