// SPDX-License-Identifier: Apache-2.0
#include "b2t/decoder.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace b2t;
using b2t::testing::max_rel_error;
using b2t::testing::numeric_gradient;
using b2t::testing::TempDir;

namespace {

DecoderConfig small_config() {
  DecoderConfig c;
  c.vocab_size = 6;
  c.embed_dim = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ff_dim = 12;
  c.max_context = 16;
  return c;
}

Decoder small_decoder(std::uint64_t seed) {
  Rng rng(seed);
  Decoder d = Decoder::create(small_config(), rng);
  // Break the symmetry of the fresh init so outputs depend on everything.
  ParamRefs refs;
  d.named_params("d", refs);
  for (auto& p : refs) {
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (Eigen::Index i = 0; i < p.value->size(); ++i) p.value->data()[i] += u(rng);
  }
  return d;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  fill_uniform(m, 1.0, rng);
  return m;
}

/// Log-probability of emitting `tokens` (then eos unless `open`) after `prefix`.
double sequence_logprob(const Decoder& d, const Matrix& prefix, const std::vector<int>& tokens, bool open) {
  const Matrix lp = log_softmax_rows(d.forward_with_prefix(prefix, tokens));
  double total = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) total += lp(static_cast<Eigen::Index>(i), tokens[i]);
  if (!open) total += lp(static_cast<Eigen::Index>(tokens.size()), d.config.eos);
  return total;
}

}  // namespace

TEST_CASE("sinusoid table entries") {
  const Matrix t = sinusoid_table(7, 6, 0.5);
  REQUIRE(t.rows() == 7);
  REQUIRE(t.cols() == 6);
  for (int p = 0; p < 7; ++p) {
    for (int i = 0; i < 3; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / 6.0);
      CHECK(t(p, 2 * i) == doctest::Approx(0.5 * std::sin(p * freq)).epsilon(1e-14));
      CHECK(t(p, 2 * i + 1) == doctest::Approx(0.5 * std::cos(p * freq)).epsilon(1e-14));
    }
  }
  Rng rng(1);
  const Decoder d = Decoder::create(small_config(), rng);
  CHECK(d.pos_embed == sinusoid_table(16, 8, kPositionInitAmplitude));
}

TEST_CASE("decoder is causal") {
  const Decoder d = small_decoder(2);
  Rng rng(3);
  Matrix x = random_matrix(7, 8, rng);
  const Matrix base = d.forward(x, 0);
  for (int j = 1; j < 7; ++j) {
    Matrix y = x;
    y.row(j) = random_matrix(1, 8, rng);
    const Matrix out = d.forward(y, 0);
    CHECK((out.topRows(j) - base.topRows(j)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out.row(j) - base.row(j)).cwiseAbs().maxCoeff() > 0.0);
  }
  CHECK(d.forward(x, 4) == base.bottomRows(3));
}

TEST_CASE("incremental decoding matches the full forward pass") {
  const Decoder d = small_decoder(4);
  Rng rng(5);
  const Matrix x = random_matrix(9, 8, rng);
  const Matrix full = d.forward(x, 0);
  KvCache cache = d.empty_cache();
  const Matrix first = d.forward_cached(x.topRows(4), cache);
  CHECK(max_rel_error(first, full.topRows(4)) < 1e-10);
  for (int t = 4; t < 9; ++t) {
    const Matrix row = d.forward_cached(x.middleRows(t, 1), cache);
    CHECK(max_rel_error(row, full.middleRows(t, 1)) < 1e-10);
  }
  CHECK(cache.length == 9);
}

TEST_CASE("context overflow and bad token ids are rejected") {
  const Decoder d = small_decoder(6);
  CHECK_THROWS_AS(d.forward(Matrix::Zero(17, 8), 0), ContextOverflow);
  CHECK_THROWS_AS(d.forward_with_prefix(Matrix::Zero(15, 8), {3}), ContextOverflow);
  CHECK_THROWS_AS(d.embed_tokens({6}), std::out_of_range);
  CHECK_THROWS_AS(d.forward(Matrix::Zero(3, 7), 0), ShapeError);
}

TEST_CASE("nll is the mean teacher-forced token loss") {
  const Decoder d = small_decoder(7);
  Rng rng(8);
  const Matrix prefix = random_matrix(3, 8, rng);
  const std::vector<int> target{4, 3, 5, 2};
  const Matrix lp = log_softmax_rows(d.forward_with_prefix(prefix, {4, 3, 5}));
  double expect = 0;
  for (int i = 0; i < 4; ++i) expect -= lp(i, target[i]);
  CHECK(d.nll(prefix, target) == doctest::Approx(expect / 4).epsilon(1e-12));

  // Forced inputs change what the model reads, not what it is scored on.
  const std::vector<int> forced{0, 5, 5};
  const Matrix lpf = log_softmax_rows(d.forward_with_prefix(prefix, forced));
  double expect_forced = 0;
  for (int i = 0; i < 4; ++i) expect_forced -= lpf(i, target[i]);
  CHECK(d.nll(prefix, target, nullptr, nullptr, &forced) == doctest::Approx(expect_forced / 4).epsilon(1e-12));

  const std::vector<int> short_forced{1};
  const std::vector<int> bad_forced{0, 9, 1};
  CHECK_THROWS_AS(d.nll(prefix, target, nullptr, nullptr, &short_forced), std::invalid_argument);
  CHECK_THROWS_AS(d.nll(prefix, target, nullptr, nullptr, &bad_forced), std::out_of_range);
  CHECK_THROWS_AS(d.nll(prefix, {4, 3}), std::invalid_argument);
  CHECK_THROWS_AS(d.nll(prefix, {}), std::invalid_argument);
}

TEST_CASE("nll gradients match finite differences") {
  Decoder d = small_decoder(9);
  Rng rng(10);
  Matrix prefix = random_matrix(2, 8, rng);
  const std::vector<int> target{3, 5, 2};
  const std::vector<int> forced{0, 4};
  for (const std::vector<int>* inputs : {static_cast<const std::vector<int>*>(nullptr), &forced}) {
    Matrix dprefix;
    Decoder grads = d.zeros_like();
    d.nll(prefix, target, &dprefix, &grads, inputs);
    auto loss = [&] { return d.nll(prefix, target, nullptr, nullptr, inputs); };
    CHECK(max_rel_error(dprefix, numeric_gradient(prefix, loss)) < 1e-5);
    CHECK(max_rel_error(grads.blocks[0].q.weight, numeric_gradient(d.blocks[0].q.weight, loss)) < 1e-5);
    CHECK(max_rel_error(grads.blocks[1].fc2.bias, numeric_gradient(d.blocks[1].fc2.bias, loss)) < 1e-5);
    CHECK(max_rel_error(grads.tok_embed, numeric_gradient(d.tok_embed, loss)) < 1e-5);
    CHECK(max_rel_error(grads.pos_embed, numeric_gradient(d.pos_embed, loss)) < 1e-5);
    CHECK(max_rel_error(grads.lnf_g, numeric_gradient(d.lnf_g, loss)) < 1e-5);
  }
}

TEST_CASE("fresh lora adapters leave outputs unchanged and merge exactly") {
  Decoder d = small_decoder(11);
  Rng rng(12);
  const Matrix prefix = random_matrix(3, 8, rng);
  const Matrix before = d.forward_with_prefix(prefix, {3, 4});
  d.attach_lora(2, {"q", "v", "fc1"}, rng);
  CHECK(d.has_lora());
  CHECK(d.blocks[0].q.lora_scale == 1.0);
  CHECK(d.forward_with_prefix(prefix, {3, 4}) == before);
  CHECK_THROWS_AS(d.attach_lora(2, {"q"}, rng), std::logic_error);

  for (auto& b : d.blocks) fill_uniform(b.v.lora_b, 0.5, rng);
  const Matrix adapted = d.forward_with_prefix(prefix, {3, 4});
  CHECK((adapted - before).cwiseAbs().maxCoeff() > 1e-6);
  d.merge_lora();
  CHECK_FALSE(d.has_lora());
  CHECK(max_rel_error(d.forward_with_prefix(prefix, {3, 4}), adapted) < 1e-10);

  Decoder e = small_decoder(11);
  CHECK_THROWS_AS(e.attach_lora(2, {"w"}, rng), std::invalid_argument);
  CHECK_THROWS_AS(e.attach_lora(0, {"q"}, rng), std::invalid_argument);
  CHECK_FALSE(e.has_lora());
  e.attach_lora(4, {"k"}, rng, 8.0);
  CHECK(e.blocks[1].k.lora_scale == 2.0);
}

TEST_CASE("greedy generation follows the per-step argmax") {
  const Decoder d = small_decoder(13);
  Rng rng(14);
  const Matrix prefix = random_matrix(2, 8, rng);
  GenerationConfig g;
  g.max_new_tokens = 5;
  const GenerationResult r = generate(d, prefix, g);

  std::vector<int> tokens;
  bool done = false;
  for (int step = 0; step < 5 && !done; ++step) {
    const Matrix lp = log_softmax_rows(d.forward_with_prefix(prefix, tokens));
    Eigen::Index best = 0;
    lp.row(lp.rows() - 1).maxCoeff(&best);
    if (best == d.config.eos) done = true;
    else tokens.push_back(static_cast<int>(best));
  }
  CHECK(r.tokens == tokens);
  CHECK(r.truncated == !done);
  CHECK(r.logprob == doctest::Approx(sequence_logprob(d, prefix, tokens, !done)).epsilon(1e-10));
}

TEST_CASE("wide beam search finds the most probable sequence") {
  const int max_new = 3;
  for (std::uint64_t seed : {15, 16, 17, 18}) {
    const Decoder d = small_decoder(seed);
    Rng rng(seed);
    const Matrix prefix = random_matrix(2, 8, rng);

    // Exhaustive search over every finished and every truncated sequence.
    double best = -1e300;
    std::vector<int> best_tokens;
    std::function<void(std::vector<int>&)> walk = [&](std::vector<int>& seq) {
      const bool open = static_cast<int>(seq.size()) == max_new;
      const double lp = sequence_logprob(d, prefix, seq, open);
      if (lp > best) {
        best = lp;
        best_tokens = seq;
      }
      if (open) return;
      for (int t = 0; t < d.config.vocab_size; ++t) {
        if (t == d.config.eos) continue;
        seq.push_back(t);
        walk(seq);
        seq.pop_back();
      }
    };
    std::vector<int> seq;
    walk(seq);

    GenerationConfig beam;
    beam.mode = GenerationConfig::Mode::beam;
    beam.beam_size = 200;
    beam.max_new_tokens = max_new;
    const GenerationResult r = generate(d, prefix, beam);
    CHECK(r.tokens == best_tokens);
    CHECK(r.logprob == doctest::Approx(best).epsilon(1e-10));

    GenerationConfig greedy;
    greedy.max_new_tokens = max_new;
    CHECK(generate(d, prefix, greedy).logprob <= r.logprob + 1e-12);
  }
}

TEST_CASE("zero new tokens yields an empty truncated result") {
  const Decoder d = small_decoder(19);
  GenerationConfig g;
  g.max_new_tokens = 0;
  const GenerationResult r = generate(d, Matrix::Zero(0, 8), g);
  CHECK(r.tokens.empty());
  CHECK(r.truncated);
}

TEST_CASE("exported decoders import bit-exactly") {
  TempDir dir;
  const Decoder d = small_decoder(20);
  export_decoder(d, dir / "dec");
  const Decoder back = import_pretrained(dir / "dec", d.config);
  CHECK(back.tok_embed == d.tok_embed);
  CHECK(back.blocks[1].fc1.weight == d.blocks[1].fc1.weight);
  CHECK(back.head.bias == d.head.bias);

  DecoderConfig wider = d.config;
  wider.embed_dim = 12;
  CHECK_THROWS(import_pretrained(dir / "dec", wider));
  CHECK_THROWS(import_pretrained(dir / "missing", d.config));
}
