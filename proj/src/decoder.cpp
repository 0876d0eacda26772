// SPDX-License-Identifier: Apache-2.0
#include "b2t/decoder.hpp"

#include "b2t/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace b2t {

void DecoderConfig::validate() const {
  if (vocab_size < 3) throw std::invalid_argument("decoder: vocab_size too small");
  if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0) {
    throw std::invalid_argument("decoder: embed_dim must be a positive multiple of num_heads");
  }
  if (num_layers < 1 || ff_dim < 1 || max_context < 2) throw std::invalid_argument("decoder: bad layer sizes");
  for (int id : {bos, eos, pad}) {
    if (id < 0 || id >= vocab_size) throw std::invalid_argument("decoder: special id out of range");
  }
}

Linear* DecoderBlock::map(const std::string& name) {
  if (name == "q") return &q;
  if (name == "k") return &k;
  if (name == "v") return &v;
  if (name == "o") return &o;
  if (name == "fc1") return &fc1;
  if (name == "fc2") return &fc2;
  return nullptr;
}

Matrix sinusoid_table(int rows, int dim, double amplitude) {
  Matrix t = Matrix::Zero(rows, dim);
  for (int p = 0; p < rows; ++p) {
    for (int i = 0; 2 * i < dim; ++i) {
      const double f = std::pow(10000.0, -2.0 * i / dim);
      t(p, 2 * i) = amplitude * std::sin(p * f);
      if (2 * i + 1 < dim) t(p, 2 * i + 1) = amplitude * std::cos(p * f);
    }
  }
  return t;
}

Decoder Decoder::create(const DecoderConfig& config, Rng& rng) {
  config.validate();
  const int D = config.embed_dim;
  Decoder d;
  d.config = config;
  std::normal_distribution<double> normal(0.0, 0.02);
  d.tok_embed = Matrix(config.vocab_size, D);
  for (Eigen::Index i = 0; i < d.tok_embed.size(); ++i) d.tok_embed.data()[i] = normal(rng);
  d.pos_embed = sinusoid_table(config.max_context, D, kPositionInitAmplitude);
  for (int l = 0; l < config.num_layers; ++l) {
    DecoderBlock b;
    b.ln1_g = Matrix::Ones(1, D);
    b.ln1_b = Matrix::Zero(1, D);
    b.q = Linear::create(D, D, rng);
    b.k = Linear::create(D, D, rng);
    b.v = Linear::create(D, D, rng);
    b.o = Linear::create(D, D, rng);
    b.ln2_g = Matrix::Ones(1, D);
    b.ln2_b = Matrix::Zero(1, D);
    b.fc1 = Linear::create(D, config.ff_dim, rng);
    b.fc2 = Linear::create(config.ff_dim, D, rng);
    d.blocks.push_back(std::move(b));
  }
  d.lnf_g = Matrix::Ones(1, D);
  d.lnf_b = Matrix::Zero(1, D);
  d.head = Linear::create(D, config.vocab_size, rng);
  return d;
}

Matrix Decoder::embed_tokens(const std::vector<int>& ids) const {
  Matrix out(static_cast<Eigen::Index>(ids.size()), config.embed_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size) {
      throw std::out_of_range("token id out of range: " + std::to_string(ids[i]));
    }
    out.row(static_cast<Eigen::Index>(i)) = tok_embed.row(ids[i]);
  }
  return out;
}

KvCache Decoder::empty_cache() const {
  KvCache c;
  c.k.assign(blocks.size(), Matrix(0, config.embed_dim));
  c.v.assign(blocks.size(), Matrix(0, config.embed_dim));
  return c;
}

Matrix Decoder::run(const Matrix& inputs, Eigen::Index from_row, KvCache* cache, DecoderTrace* trace) const {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index start = cache != nullptr ? cache->length : 0;
  if (start + n > config.max_context) {
    throw ContextOverflow("context overflow: " + std::to_string(start + n) + " > max_context " +
                          std::to_string(config.max_context));
  }
  if (inputs.cols() != config.embed_dim) throw ShapeError("decoder inputs have the wrong embedding width");
  const int H = config.num_heads;
  const int dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x = inputs + pos_embed.middleRows(start, n);
  if (trace != nullptr) {
    trace->inputs = inputs;
    trace->blocks.assign(blocks.size(), {});
    trace->from_row = from_row;
  }

  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const DecoderBlock& b = blocks[l];
    BlockTrace* bt = trace != nullptr ? &trace->blocks[l] : nullptr;
    LayerNormTrace ln1;
    Matrix h1 = layer_norm(x, b.ln1_g, b.ln1_b, &ln1);
    Matrix q = b.q.forward(h1);
    Matrix k = b.k.forward(h1);
    Matrix v = b.v.forward(h1);
    const Matrix* k_all = &k;
    const Matrix* v_all = &v;
    if (cache != nullptr) {
      Matrix& ck = cache->k[l];
      Matrix& cv = cache->v[l];
      ck.conservativeResize(start + n, Eigen::NoChange);
      cv.conservativeResize(start + n, Eigen::NoChange);
      ck.bottomRows(n) = k;
      cv.bottomRows(n) = v;
      k_all = &ck;
      v_all = &cv;
    }
    const Eigen::Index total = start + n;
    Matrix attn(n, config.embed_dim);
    if (bt != nullptr) bt->probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      Matrix s = (q.middleCols(h * dh, dh) * k_all->middleCols(h * dh, dh).transpose()) * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index visible = start + i + 1;
        const double mx = s.row(i).head(visible).maxCoeff();
        double sum = 0;
        for (Eigen::Index j = 0; j < total; ++j) {
          const double e = j < visible ? std::exp(s(i, j) - mx) : 0.0;
          s(i, j) = e;
          sum += e;
        }
        s.row(i) /= sum;
      }
      attn.middleCols(h * dh, dh).noalias() = s * v_all->middleCols(h * dh, dh);
      if (bt != nullptr) bt->probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Matrix x_mid = x + b.o.forward(attn);
    LayerNormTrace ln2;
    Matrix h2 = layer_norm(x_mid, b.ln2_g, b.ln2_b, &ln2);
    Matrix f1 = b.fc1.forward(h2);
    Matrix g1 = gelu(f1);
    Matrix x_out = x_mid + b.fc2.forward(g1);
    if (bt != nullptr) {
      bt->x_in = std::move(x);
      bt->ln1 = std::move(ln1);
      bt->h1 = std::move(h1);
      bt->q = std::move(q);
      bt->k = std::move(k);
      bt->v = std::move(v);
      bt->attn = std::move(attn);
      bt->ln2 = std::move(ln2);
      bt->h2 = std::move(h2);
      bt->f1 = std::move(f1);
      bt->g1 = std::move(g1);
    }
    x = std::move(x_out);
  }
  if (cache != nullptr) cache->length = start + n;

  LayerNormTrace lnf;
  Matrix hf = layer_norm(x.bottomRows(n - from_row), lnf_g, lnf_b, &lnf);
  Matrix logits = head.forward(hf);
  if (trace != nullptr) {
    trace->lnf = std::move(lnf);
    trace->hf = std::move(hf);
  }
  return logits;
}

Matrix Decoder::forward(const Matrix& inputs, Eigen::Index from_row, DecoderTrace* trace) const {
  if (from_row < 0 || from_row > inputs.rows()) throw std::out_of_range("decoder: from_row out of range");
  return run(inputs, from_row, nullptr, trace);
}

Matrix Decoder::forward_cached(const Matrix& inputs, KvCache& cache) const { return run(inputs, 0, &cache, nullptr); }

Matrix Decoder::backward(const DecoderTrace& tr, const Matrix& dlogits, Decoder* grads) const {
  const int H = config.num_heads;
  const int dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index n = tr.inputs.rows();

  const Matrix dhf = head.backward(tr.hf, dlogits, grads != nullptr ? &grads->head : nullptr);
  Matrix dx = Matrix::Zero(n, config.embed_dim);
  dx.bottomRows(n - tr.from_row) = layer_norm_backward(tr.lnf, lnf_g, dhf, grads != nullptr ? &grads->lnf_g : nullptr,
                                                       grads != nullptr ? &grads->lnf_b : nullptr);

  for (std::size_t li = blocks.size(); li-- > 0;) {
    const DecoderBlock& b = blocks[li];
    const BlockTrace& bt = tr.blocks[li];
    DecoderBlock* gb = grads != nullptr ? &grads->blocks[li] : nullptr;

    // MLP branch
    Matrix dg1 = b.fc2.backward(bt.g1, dx, gb != nullptr ? &gb->fc2 : nullptr);
    Matrix df1 = (dg1.array() * gelu_grad(bt.f1).array()).matrix();
    Matrix dh2 = b.fc1.backward(bt.h2, df1, gb != nullptr ? &gb->fc1 : nullptr);
    Matrix dx_mid = dx + layer_norm_backward(bt.ln2, b.ln2_g, dh2, gb != nullptr ? &gb->ln2_g : nullptr,
                                             gb != nullptr ? &gb->ln2_b : nullptr);

    // Attention branch
    Matrix dattn = b.o.backward(bt.attn, dx_mid, gb != nullptr ? &gb->o : nullptr);
    Matrix dq(n, config.embed_dim), dk(n, config.embed_dim), dv(n, config.embed_dim);
    for (int h = 0; h < H; ++h) {
      const Matrix& p = bt.probs[static_cast<std::size_t>(h)];
      const auto da = dattn.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh).noalias() = p.transpose() * da;
      Matrix dp = da * bt.v.middleCols(h * dh, dh).transpose();
      const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
      Matrix ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
      dq.middleCols(h * dh, dh).noalias() = ds * bt.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * bt.q.middleCols(h * dh, dh);
    }
    Matrix dh1 = b.q.backward(bt.h1, dq, gb != nullptr ? &gb->q : nullptr);
    dh1 += b.k.backward(bt.h1, dk, gb != nullptr ? &gb->k : nullptr);
    dh1 += b.v.backward(bt.h1, dv, gb != nullptr ? &gb->v : nullptr);
    dx = dx_mid + layer_norm_backward(bt.ln1, b.ln1_g, dh1, gb != nullptr ? &gb->ln1_g : nullptr,
                                      gb != nullptr ? &gb->ln1_b : nullptr);
  }
  if (grads != nullptr) grads->pos_embed.topRows(n) += dx;
  return dx;
}

Matrix Decoder::forward_with_prefix(const Matrix& prefix, const std::vector<int>& ids) const {
  std::vector<int> seq{config.bos};
  seq.insert(seq.end(), ids.begin(), ids.end());
  Matrix inputs(prefix.rows() + static_cast<Eigen::Index>(seq.size()), config.embed_dim);
  if (prefix.rows() > 0) inputs.topRows(prefix.rows()) = prefix;
  inputs.bottomRows(static_cast<Eigen::Index>(seq.size())) = embed_tokens(seq);
  return forward(inputs, prefix.rows());
}

double Decoder::nll(const Matrix& prefix, const std::vector<int>& target, Matrix* dprefix, Decoder* grads,
                    const std::vector<int>* forced) const {
  if (target.empty()) throw std::invalid_argument("empty target");
  if (target.back() != config.eos) throw std::invalid_argument("target must end with eos");
  const auto L = static_cast<Eigen::Index>(target.size());
  const Eigen::Index tb = prefix.rows();
  if (prefix.rows() > 0 && prefix.cols() != config.embed_dim) {
    throw ShapeError("prefix width " + std::to_string(prefix.cols()) + " != embed_dim " +
                     std::to_string(config.embed_dim));
  }

  std::vector<int> in_ids{config.bos};
  if (forced != nullptr) {
    if (forced->size() + 1 != target.size()) throw std::invalid_argument("nll: inputs must be one shorter than target");
    for (const int id : *forced) {
      if (id < 0 || id >= config.vocab_size) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
    }
    in_ids.insert(in_ids.end(), forced->begin(), forced->end());
  } else {
    in_ids.insert(in_ids.end(), target.begin(), target.end() - 1);
  }
  Matrix inputs(tb + L, config.embed_dim);
  if (tb > 0) inputs.topRows(tb) = prefix;
  inputs.bottomRows(L) = embed_tokens(in_ids);

  const bool need_grad = dprefix != nullptr || grads != nullptr;
  DecoderTrace trace;
  const Matrix logits = forward(inputs, tb, need_grad ? &trace : nullptr);
  const Matrix lp = log_softmax_rows(logits);
  double loss = 0;
  for (Eigen::Index i = 0; i < L; ++i) loss -= lp(i, target[static_cast<std::size_t>(i)]);
  loss /= static_cast<double>(L);

  if (need_grad) {
    Matrix dlogits = lp.array().exp().matrix();
    for (Eigen::Index i = 0; i < L; ++i) dlogits(i, target[static_cast<std::size_t>(i)]) -= 1.0;
    dlogits /= static_cast<double>(L);
    const Matrix dinputs = backward(trace, dlogits, grads);
    if (dprefix != nullptr) *dprefix = dinputs.topRows(tb);
    if (grads != nullptr) {
      for (Eigen::Index i = 0; i < L; ++i) grads->tok_embed.row(in_ids[static_cast<std::size_t>(i)]) += dinputs.row(tb + i);
    }
  }
  return loss;
}

void Decoder::attach_lora(int rank, const std::vector<std::string>& targets, Rng& rng, double alpha) {
  if (rank < 1) throw std::invalid_argument("lora rank must be >= 1");
  if (targets.empty()) throw std::invalid_argument("lora: no target maps");
  if (has_lora()) throw std::logic_error("lora adapters already attached");
  const double scale = (alpha > 0 ? alpha : static_cast<double>(rank)) / static_cast<double>(rank);
  for (auto& b : blocks) {
    for (const auto& name : targets) {
      if (b.map(name) == nullptr) throw std::invalid_argument("lora: unknown target map '" + name + "'");
    }
  }
  for (auto& b : blocks) {
    for (const auto& name : targets) {
      Linear* m = b.map(name);
      m->lora_a = Matrix(m->in_dim(), rank);
      fill_uniform(m->lora_a, 1.0 / std::sqrt(static_cast<double>(m->in_dim())), rng);
      m->lora_b = Matrix::Zero(rank, m->out_dim());
      m->lora_scale = scale;
    }
  }
}

void Decoder::merge_lora() {
  for (auto& b : blocks) {
    for (const char* name : {"q", "k", "v", "o", "fc1", "fc2"}) {
      Linear* m = b.map(name);
      if (!m->has_lora()) continue;
      m->weight.noalias() += m->lora_scale * (m->lora_a * m->lora_b);
      m->lora_a.resize(0, 0);
      m->lora_b.resize(0, 0);
      m->lora_scale = 0.0;
    }
  }
}

bool Decoder::has_lora() const {
  for (const auto& b : blocks) {
    for (const Linear* m : {&b.q, &b.k, &b.v, &b.o, &b.fc1, &b.fc2}) {
      if (m->has_lora()) return true;
    }
  }
  return false;
}

Decoder Decoder::zeros_like() const {
  Decoder g;
  g.config = config;
  g.tok_embed = b2t::zeros_like(tok_embed);
  g.pos_embed = b2t::zeros_like(pos_embed);
  for (const auto& b : blocks) {
    DecoderBlock z;
    z.ln1_g = b2t::zeros_like(b.ln1_g);
    z.ln1_b = b2t::zeros_like(b.ln1_b);
    z.q = b.q.zeros_like();
    z.k = b.k.zeros_like();
    z.v = b.v.zeros_like();
    z.o = b.o.zeros_like();
    z.ln2_g = b2t::zeros_like(b.ln2_g);
    z.ln2_b = b2t::zeros_like(b.ln2_b);
    z.fc1 = b.fc1.zeros_like();
    z.fc2 = b.fc2.zeros_like();
    g.blocks.push_back(std::move(z));
  }
  g.lnf_g = b2t::zeros_like(lnf_g);
  g.lnf_b = b2t::zeros_like(lnf_b);
  g.head = head.zeros_like();
  return g;
}

void Decoder::named_params(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".tok_embed", &tok_embed});
  out.push_back({prefix + ".pos_embed", &pos_embed});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& b = blocks[i];
    const std::string p = prefix + ".blocks." + std::to_string(i);
    out.push_back({p + ".ln1.g", &b.ln1_g});
    out.push_back({p + ".ln1.b", &b.ln1_b});
    b.q.named_params(p + ".attn.q", out);
    b.k.named_params(p + ".attn.k", out);
    b.v.named_params(p + ".attn.v", out);
    b.o.named_params(p + ".attn.o", out);
    out.push_back({p + ".ln2.g", &b.ln2_g});
    out.push_back({p + ".ln2.b", &b.ln2_b});
    b.fc1.named_params(p + ".mlp.fc1", out);
    b.fc2.named_params(p + ".mlp.fc2", out);
  }
  out.push_back({prefix + ".lnf.g", &lnf_g});
  out.push_back({prefix + ".lnf.b", &lnf_b});
  head.named_params(prefix + ".head", out);
}

// ---------------------------------------------------------------------------
// Generation

void GenerationConfig::validate() const {
  if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (max_new_tokens < 0) throw std::invalid_argument("max_new_tokens must be >= 0");
}

namespace {

struct Hypothesis {
  std::vector<int> tokens;
  double logprob = 0;
  KvCache cache;
  RowVector next_logprobs;
};

double ranking_score(const GenerationResult& r, double alpha) {
  if (alpha == 0.0) return r.logprob;
  const double len = static_cast<double>(r.tokens.size());
  return r.logprob / std::pow((5.0 + len) / 6.0, alpha);
}

}  // namespace

GenerationResult generate(const Decoder& decoder, const Matrix& prefix, const GenerationConfig& config) {
  config.validate();
  const int eos = decoder.config.eos;
  const Eigen::Index max_ctx = decoder.config.max_context;

  Hypothesis root;
  root.cache = decoder.empty_cache();
  Matrix inputs(prefix.rows() + 1, decoder.config.embed_dim);
  if (prefix.rows() > 0) inputs.topRows(prefix.rows()) = prefix;
  inputs.bottomRows(1) = decoder.embed_tokens({decoder.config.bos});
  root.next_logprobs = log_softmax_rows(decoder.forward_cached(inputs, root.cache).bottomRows(1));

  const int beam = config.mode == GenerationConfig::Mode::greedy ? 1 : config.beam_size;
  std::vector<Hypothesis> live;
  live.push_back(std::move(root));
  std::vector<GenerationResult> finished;

  for (int step = 0; step < config.max_new_tokens && !live.empty(); ++step) {
    struct Candidate {
      double logprob;
      std::size_t beam;
      int token;
    };
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (Eigen::Index t = 0; t < live[b].next_logprobs.size(); ++t) {
        cands.push_back({live[b].logprob + live[b].next_logprobs[t], b, static_cast<int>(t)});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });

    std::vector<Hypothesis> next;
    for (const Candidate& c : cands) {
      if (static_cast<int>(next.size()) >= beam) break;
      if (c.token == eos) {
        if (static_cast<int>(finished.size()) < beam) finished.push_back({live[c.beam].tokens, c.logprob, false});
        continue;
      }
      Hypothesis h;
      h.tokens = live[c.beam].tokens;
      h.tokens.push_back(c.token);
      h.logprob = c.logprob;
      h.cache = live[c.beam].cache;
      next.push_back(std::move(h));
    }
    // Advance survivors; a hypothesis that fills the context is cut off.
    std::vector<Hypothesis> advanced;
    for (Hypothesis& h : next) {
      if (h.cache.length + 1 > max_ctx) {
        finished.push_back({h.tokens, h.logprob, true});
        continue;
      }
      h.next_logprobs =
          log_softmax_rows(decoder.forward_cached(decoder.embed_tokens({h.tokens.back()}), h.cache)).row(0);
      advanced.push_back(std::move(h));
    }
    live = std::move(advanced);

    if (static_cast<int>(finished.size()) >= beam) break;
    if (config.length_penalty == 0.0 && !finished.empty() && !live.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_finished = std::max(best_finished, f.logprob);
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& h : live) best_live = std::max(best_live, h.logprob);
      // Scores only decrease as hypotheses grow.
      if (best_finished >= best_live) break;
    }
  }
  for (const Hypothesis& h : live) finished.push_back({h.tokens, h.logprob, true});
  if (finished.empty()) return {{}, 0.0, true};

  const GenerationResult* best = &finished.front();
  for (const auto& f : finished) {
    if (ranking_score(f, config.length_penalty) > ranking_score(*best, config.length_penalty)) best = &f;
  }
  return *best;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_json(const DecoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim}, {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},   {"ff_dim", c.ff_dim},       {"max_context", c.max_context},
          {"bos", c.bos},               {"eos", c.eos},             {"pad", c.pad}};
}

DecoderConfig decoder_config_from_json(const nlohmann::json& j) {
  DecoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.max_context = j.at("max_context").get<int>();
  c.bos = j.at("bos").get<int>();
  c.eos = j.at("eos").get<int>();
  c.pad = j.at("pad").get<int>();
  return c;
}

void export_decoder(const Decoder& decoder, const std::filesystem::path& dir, const BpeModel* tokenizer) {
  Decoder copy = decoder;
  ParamRefs refs;
  copy.named_params("decoder", refs);
  nlohmann::ordered_json meta;
  meta["kind"] = "decoder";
  meta["decoder_config"] = to_json(decoder.config);
  std::map<std::string, std::string> files;
  if (tokenizer != nullptr) {
    files["tokenizer/merges.txt"] = tokenizer->merges_text();
    files["tokenizer/vocab.json"] = tokenizer->vocab_text();
  }
  save_tensor_dir(dir, refs, TensorDtype::f64, meta, files);
}

Decoder import_pretrained(const std::filesystem::path& dir, const DecoderConfig& expected) {
  Rng rng(0);
  Decoder d = Decoder::create(expected, rng);
  ParamRefs refs;
  d.named_params("decoder", refs);
  const TensorDir stored = load_tensor_dir(dir);
  load_params_into(stored, refs, /*allow_extra=*/false);
  if (stored.meta.contains("decoder_config")) {
    const auto& c = stored.meta["decoder_config"];
    if (c.value("bos", expected.bos) != expected.bos || c.value("eos", expected.eos) != expected.eos ||
        c.value("pad", expected.pad) != expected.pad || c.value("num_heads", expected.num_heads) != expected.num_heads) {
      throw CheckpointError("decoder config mismatch (special ids or head count) in " + dir.string());
    }
  }
  return d;
}

}  // namespace b2t
