// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/layers.hpp"
#include "b2t/tensor.hpp"
#include "b2t/textproc.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace b2t {

/// Amplitude of the sinusoidal table that initializes the learned position embeddings.
inline constexpr double kPositionInitAmplitude = 0.5;

/// rows×dim table with sin/cos pairs at geometrically spaced frequencies
/// (column 2i: sin(p·10000^(-2i/dim)), column 2i+1: the matching cos).
Matrix sinusoid_table(int rows, int dim, double amplitude);

struct DecoderConfig {
  int vocab_size = 256;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ff_dim = 256;
  int max_context = 256;
  int bos = 1;
  int eos = 2;
  int pad = 0;

  int head_dim() const { return embed_dim / num_heads; }
  void validate() const;
  bool operator==(const DecoderConfig&) const = default;
};

nlohmann::ordered_json to_json(const DecoderConfig& c);
DecoderConfig decoder_config_from_json(const nlohmann::json& j);

class ContextOverflow : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Pre-LayerNorm transformer block.
struct DecoderBlock {
  Matrix ln1_g, ln1_b;
  Linear q, k, v, o;
  Matrix ln2_g, ln2_b;
  Linear fc1, fc2;

  Linear* map(const std::string& name);
};

struct BlockTrace {
  Matrix x_in;
  LayerNormTrace ln1;
  Matrix h1, q, k, v;
  std::vector<Matrix> probs;  // per head, rows × rows
  Matrix attn;
  LayerNormTrace ln2;
  Matrix h2, f1, g1;
};

struct DecoderTrace {
  Matrix inputs;
  std::vector<BlockTrace> blocks;
  LayerNormTrace lnf;
  Matrix hf;  // final normalized states of the scored rows
  Eigen::Index from_row = 0;
};

/// Per-layer key/value rows for incremental decoding.
struct KvCache {
  std::vector<Matrix> k;
  std::vector<Matrix> v;
  Eigen::Index length = 0;
};

/// Causal decoder-only language model with learned positions and a
/// separate output projection.
class Decoder {
 public:
  DecoderConfig config;
  Matrix tok_embed;  // V × D
  Matrix pos_embed;  // C × D
  std::vector<DecoderBlock> blocks;
  Matrix lnf_g, lnf_b;
  Linear head;  // D × V

  static Decoder create(const DecoderConfig& config, Rng& rng);

  Matrix embed_tokens(const std::vector<int>& ids) const;

  /// Runs the stack over input embeddings (positions added internally) and
  /// returns logits for rows [from_row, N).
  Matrix forward(const Matrix& inputs, Eigen::Index from_row, DecoderTrace* trace = nullptr) const;
  /// Backpropagates dL/dlogits of the scored rows. Returns dL/dinputs.
  /// Parameter gradients go to `grads` unless null.
  Matrix backward(const DecoderTrace& trace, const Matrix& dlogits, Decoder* grads) const;

  /// Logits for the positions of [E, bos, ids...] from bos onward
  /// (|ids| + 1 rows).
  Matrix forward_with_prefix(const Matrix& prefix, const std::vector<int>& ids) const;

  /// Mean token negative log-likelihood of `target` (must end with eos)
  /// given the prefix, teacher forced. Gradients are optional. `inputs`
  /// replaces the teacher-forced tokens after bos (default: target without eos).
  double nll(const Matrix& prefix, const std::vector<int>& target, Matrix* dprefix = nullptr,
             Decoder* grads = nullptr, const std::vector<int>* inputs = nullptr) const;

  /// Appends `inputs` to the cache and returns the logits of the new rows.
  Matrix forward_cached(const Matrix& inputs, KvCache& cache) const;
  KvCache empty_cache() const;

  /// Adds A (in×r, uniform) and B (r×out, zero) to the named maps of every
  /// block. Valid names: q k v o fc1 fc2. Throws on double attach.
  void attach_lora(int rank, const std::vector<std::string>& targets, Rng& rng, double alpha = 0.0);
  /// Folds scale·A·B into the base weights and removes the adapters.
  void merge_lora();
  bool has_lora() const;

  Decoder zeros_like() const;
  void named_params(const std::string& prefix, ParamRefs& out);

 private:
  Matrix run(const Matrix& inputs, Eigen::Index from_row, KvCache* cache, DecoderTrace* trace) const;
};

struct GenerationConfig {
  enum class Mode { greedy, beam };
  Mode mode = Mode::greedy;
  int beam_size = 5;
  int max_new_tokens = 32;
  double length_penalty = 0.0;

  void validate() const;
};

struct GenerationResult {
  std::vector<int> tokens;  // without eos
  double logprob = 0.0;     // includes the eos step when finished
  bool truncated = false;
};

GenerationResult generate(const Decoder& decoder, const Matrix& prefix, const GenerationConfig& config);

/// Writes the decoder (and optionally its tokenizer) as a standalone
/// checkpoint directory.
void export_decoder(const Decoder& decoder, const std::filesystem::path& dir, const BpeModel* tokenizer = nullptr);
/// Loads a decoder exported by export_decoder. Every missing or misshapen
/// tensor is listed in the error.
Decoder import_pretrained(const std::filesystem::path& dir, const DecoderConfig& expected);

}  // namespace b2t
