// SPDX-License-Identifier: Apache-2.0
#include "b2t/training.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace b2t;
using b2t::testing::TempDir;

TEST_CASE("a single adamw step moves each weight by about lr") {
  Matrix p = Matrix::Constant(1, 3, 1.0);
  Matrix g(1, 3);
  g << 1.0, -4.0, 0.0;
  AdamState st;
  adamw_step({{"p", &p}}, {{"p", &g}}, st, 0.1, 0.0);
  // Bias correction makes m̂ = g and v̂ = g², so the step is lr·sign(g).
  CHECK(p(0, 0) == doctest::Approx(1.0 - 0.1 / (1 + 1e-8)).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx(1.0 + 0.1 * 4 / (4 + 1e-8)).epsilon(1e-12));
  CHECK(p(0, 2) == 1.0);
  CHECK(st.t == 1);
}

TEST_CASE("adamw matches a scalar reference over several steps") {
  const std::vector<double> grads{0.5, -1.0, 2.0, 0.25, -0.75, 1.5};
  const double lr = 0.05, wd = 0.1;
  Matrix p = Matrix::Constant(1, 1, 2.0);
  Matrix g(1, 1);
  AdamState st;
  double ref = 2.0, m = 0, v = 0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    g(0, 0) = grads[t - 1];
    adamw_step({{"p", &p}}, {{"p", &g}}, st, lr, wd);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    ref -= lr * wd * ref;
    ref -= lr * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p(0, 0) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("adamw rejects non-finite and misshapen gradients") {
  Matrix p = Matrix::Zero(2, 2);
  Matrix bad = Matrix::Zero(2, 2);
  bad(1, 0) = std::nan("");
  AdamState st;
  CHECK_THROWS_AS(adamw_step({{"w", &p}}, {{"w", &bad}}, st, 0.1, 0.0), NonFiniteGradient);
  Matrix wrong = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(adamw_step({{"w", &p}}, {{"w", &wrong}}, st, 0.1, 0.0), ShapeError);
  CHECK(st.t == 0);
  CHECK(p == Matrix::Zero(2, 2));
}

TEST_CASE("schedule warms up linearly then decays to zero") {
  const Schedule s{2.0, 4, 12};
  const std::vector<double> expect{0.0, 0.5, 1.0, 1.5, 2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25, 0.0};
  for (long step = 0; step <= 12; ++step) CHECK(lr_at(s, step) == doctest::Approx(expect[step]));
  CHECK_THROWS_AS(lr_at(s, 13), std::out_of_range);
  CHECK_THROWS_AS(lr_at(s, -1), std::out_of_range);
  CHECK(lr_at(Schedule{1.0, 0, 4}, 0) == 1.0);
}

TEST_CASE("global norm clipping") {
  Matrix a(1, 2), b(1, 1);
  a << 3, 0;
  b << 4;
  const ParamRefs g{{"a", &a}, {"b", &b}};
  CHECK(global_norm(g) == doctest::Approx(5.0));
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(a(0, 0) == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(global_norm(g) == doctest::Approx(1.0));
  CHECK(b(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("stage config validation") {
  StageConfig c = StageConfig::defaults(Stage::finetune);
  CHECK_NOTHROW(c.validate());
  c.input_token_noise = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.input_token_noise = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = StageConfig::defaults(Stage::align);
  c.lora_rank = 4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = StageConfig::defaults(Stage::pretrain_fe);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(parse_stage("align") == Stage::align);
  CHECK(to_string(Stage::pretrain_fe) == "pretrain_fe");
}

TEST_CASE("the gradient suite covers every component within tolerance") {
  const auto results = run_gradient_suite(1, 10);
  CHECK(results.size() >= 8);
  for (const auto& r : results) {
    INFO(r.component);
    CHECK(r.coordinates > 0);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("a tiny three-stage run respects the freeze contracts") {
  TempDir dir;
  RunConfig cfg = b2t::testing::tiny_config(dir / "data");
  cfg.finetune.input_token_noise = 0.3;
  b2t::testing::write_synth_corpus(cfg);
  const Workspace ws = Workspace::open(cfg);

  const Checkpoint pre = pipeline_pretrain(ws, {});
  CHECK(pre.epoch == 2);
  CHECK(pre.model.ctc_head.has_value());
  CHECK(pre.metrics.size() == 2);

  const Checkpoint aligned = pipeline_align(ws, pre, {});
  CHECK_FALSE(aligned.model.ctc_head.has_value());
  REQUIRE(aligned.model.decoder.has_value());

  Checkpoint ft = pipeline_finetune(ws, aligned, {});
  Checkpoint al = aligned;
  CHECK(param_hashes(ft.model.extractor_params()) == param_hashes(al.model.extractor_params()));
  CHECK(param_hashes(ft.model.decoder_params()) != param_hashes(al.model.decoder_params()));

  const EvalReport r = pipeline_eval(ws, ft, std::nullopt);
  CHECK(r.trials.size() == 6);
  CHECK(r.all.wer() >= 0.0);

  save_checkpoint(ft, dir / "ckpt");
  Checkpoint back = load_checkpoint(dir / "ckpt");
  CHECK(back.stage == Stage::finetune);
  CHECK(back.epoch == ft.epoch);
  CHECK(back.step == ft.step);
  CHECK(back.config.input_token_noise == 0.3);
  CHECK(b2t::testing::model_hashes(back.model) == b2t::testing::model_hashes(ft.model));
  CHECK(back.optim_main.t == ft.optim_main.t);
}
