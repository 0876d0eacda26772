// SPDX-License-Identifier: Apache-2.0
#include "b2t/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace b2t {

GradCheckResult grad_check(const std::string& component, const ParamRefs& params, const std::function<double()>& loss,
                           const std::function<void(const ParamRefs&)>& analytic, const ParamRefs& grads, double eps,
                           int coords_per_group, std::uint64_t seed) {
  if (params.size() != grads.size()) throw std::invalid_argument("grad_check: params and grads differ in length");
  for (const auto& g : grads) g.value->setZero();
  analytic(grads);

  GradCheckResult result{component, 0.0, 0};
  Rng rng(seed);
  for (std::size_t gi = 0; gi < params.size(); ++gi) {
    Matrix& p = *params[gi].value;
    const Matrix& g = *grads[gi].value;
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(p.size()));
    std::iota(coords.begin(), coords.end(), 0);
    if (static_cast<int>(coords.size()) > coords_per_group) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(coords_per_group); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
        std::swap(coords[i], coords[pick(rng)]);
      }
      coords.resize(static_cast<std::size_t>(coords_per_group));
    }
    for (const Eigen::Index idx : coords) {
      const double orig = p.data()[idx];
      p.data()[idx] = orig + eps;
      const double up = loss();
      p.data()[idx] = orig - eps;
      const double down = loss();
      p.data()[idx] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = g.data()[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.coordinates;
    }
  }
  return result;
}

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void perturb(const ParamRefs& refs, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (const auto& r : refs) {
    for (Eigen::Index i = 0; i < r.value->size(); ++i) r.value->data()[i] += n(rng);
  }
}

ParamRefs only(const ParamRefs& refs, const std::string& needle) {
  ParamRefs out;
  for (const auto& r : refs) {
    if (r.name.find(needle) != std::string::npos) out.push_back(r);
  }
  return out;
}

FeatureExtractorConfig small_extractor() {
  FeatureExtractorConfig c;
  c.input_channels = 3;
  c.num_layers = 2;
  c.hidden = 4;
  c.bidirectional = true;
  c.stack_k = 2;
  c.stack_s = 1;
  return c;
}

DecoderConfig small_decoder() {
  DecoderConfig c;
  c.vocab_size = 7;
  c.embed_dim = 16;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ff_dim = 24;
  c.max_context = 24;
  return c;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int coords) {
  constexpr double eps = 1e-5;
  std::vector<GradCheckResult> out;
  Rng rng(seed);

  // Extractor: a smooth scalar readout of Z.
  {
    FeatureExtractor fe = FeatureExtractor::create(small_extractor(), {"s0", "s1"}, rng);
    ParamRefs params;
    fe.named_params("extractor", params);
    perturb(only(params, ".day."), rng, 0.3);
    const Matrix x = random_matrix(7, 3, rng);
    const Matrix w = random_matrix(fe.config.stacked_length(7), fe.config.output_dim(), rng);
    auto loss = [&] { return (fe.forward(x, "s1").array() * w.array()).sum(); };
    FeatureExtractor g = fe.zeros_like();
    ParamRefs grads;
    g.named_params("extractor", grads);
    auto analytic = [&](const ParamRefs&) {
      ExtractorTrace tr;
      fe.forward(x, "s1", &tr);
      fe.backward(tr, w, g);
    };
    out.push_back(grad_check("gru", only(params, ".gru."), loss, analytic, only(grads, ".gru."), eps, coords,
                             seed + 1));
    out.push_back(grad_check("day_layers", only(params, ".day.s1"), loss, analytic, only(grads, ".day.s1"), eps,
                             coords, seed + 2));
  }

  // CTC loss with respect to its logits and through the head.
  {
    Matrix logits = random_matrix(4, 4, rng);
    const LabelSequence target{1, 2};
    ParamRefs params{{"logits", &logits}};
    Matrix dl = zeros_like(logits);
    ParamRefs grads{{"logits", &dl}};
    auto loss = [&] { return ctc_loss(logits, target); };
    auto analytic = [&](const ParamRefs&) { ctc_loss(logits, target, &dl); };
    out.push_back(grad_check("ctc_loss", params, loss, analytic, grads, eps, coords, seed + 3));

    const Matrix z = random_matrix(6, 5, rng);
    CtcHead head = CtcHead::create(5, 4, rng);
    const LabelSequence t2{3, 1, 3};
    ParamRefs hp;
    head.named_params("ctc_head", hp);
    CtcHead hg = head.zeros_like();
    ParamRefs hgr;
    hg.named_params("ctc_head", hgr);
    auto hloss = [&] { return ctc_loss(head.proj.forward(z), t2); };
    auto hanalytic = [&](const ParamRefs&) {
      Matrix d;
      ctc_loss(head.proj.forward(z), t2, &d);
      head.proj.backward(z, d, &hg.proj);
    };
    out.push_back(grad_check("ctc_head", hp, hloss, hanalytic, hgr, eps, coords, seed + 4));
  }

  // Bridge under a linear readout.
  {
    Bridge b = Bridge::create(5, 6, rng);
    b.M0 = random_matrix(1, 6, rng);
    const Matrix z = random_matrix(4, 5, rng);
    const Matrix w = random_matrix(4, 6, rng);
    ParamRefs params;
    b.named_params("bridge", params);
    Bridge g = b.zeros_like();
    ParamRefs grads;
    g.named_params("bridge", grads);
    auto loss = [&] { return (b.project(z).array() * w.array()).sum(); };
    auto analytic = [&](const ParamRefs&) { b.backward(z, w, &g); };
    out.push_back(grad_check("bridge", params, loss, analytic, grads, eps, coords, seed + 5));
  }

  // Decoder blocks through the prefix-conditioned NLL.
  {
    Decoder dec = Decoder::create(small_decoder(), rng);
    ParamRefs params;
    dec.named_params("decoder", params);
    perturb(params, rng, 0.05);
    const Matrix prefix = random_matrix(3, 16, rng);
    const std::vector<int> target{4, 5, 3, 2};
    Decoder g = dec.zeros_like();
    ParamRefs grads;
    g.named_params("decoder", grads);
    auto loss = [&] { return dec.nll(prefix, target); };
    auto analytic = [&](const ParamRefs&) {
      Matrix dp;
      dec.nll(prefix, target, &dp, &g);
    };
    out.push_back(grad_check("decoder", params, loss, analytic, grads, eps, coords, seed + 6));

    // LoRA adapters, with B moved off zero so both factors receive gradient.
    dec.attach_lora(2, {"q", "v", "fc1"}, rng);
    ParamRefs lp;
    dec.named_params("decoder", lp);
    perturb(only(lp, ".lora_b"), rng, 0.1);
    Decoder lg = dec.zeros_like();
    ParamRefs lgr;
    lg.named_params("decoder", lgr);
    auto lanalytic = [&](const ParamRefs&) {
      Matrix dp;
      dec.nll(prefix, target, &dp, &lg);
    };
    out.push_back(grad_check("lora", only(lp, ".lora_"), loss, lanalytic, only(lgr, ".lora_"), eps, coords, seed + 7));
  }

  // Full path: signal → extractor → bridge → decoder NLL.
  {
    FeatureExtractorConfig fc = small_extractor();
    fc.bidirectional = false;
    FeatureExtractor fe = FeatureExtractor::create(fc, {"s0"}, rng);
    Bridge br = Bridge::create(fc.output_dim(), 16, rng);
    Decoder dec = Decoder::create(small_decoder(), rng);
    ParamRefs params;
    fe.named_params("extractor", params);
    br.named_params("bridge", params);
    dec.named_params("decoder", params);
    perturb(only(params, "extractor.day."), rng, 0.3);
    const Matrix x = random_matrix(6, 3, rng);
    const std::vector<int> target{3, 6, 2};
    FeatureExtractor gfe = fe.zeros_like();
    Bridge gbr = br.zeros_like();
    Decoder gdec = dec.zeros_like();
    ParamRefs grads;
    gfe.named_params("extractor", grads);
    gbr.named_params("bridge", grads);
    gdec.named_params("decoder", grads);
    auto loss = [&] { return dec.nll(br.project(fe.forward(x, "s0")), target); };
    auto analytic = [&](const ParamRefs&) {
      ExtractorTrace tr;
      const Matrix z = fe.forward(x, "s0", &tr);
      Matrix de;
      dec.nll(br.project(z), target, &de, &gdec);
      fe.backward(tr, br.backward(z, de, &gbr), gfe);
    };
    out.push_back(grad_check("e2e_nll", params, loss, analytic, grads, eps, coords, seed + 8));
  }
  return out;
}

}  // namespace b2t
