// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/layers.hpp"
#include "b2t/tensor.hpp"
#include "b2t/textproc.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace b2t {

struct FeatureExtractorConfig {
  int input_channels = 256;
  int num_layers = 2;
  int hidden = 64;
  bool bidirectional = false;
  int stack_k = 4;
  int stack_s = 4;
  /// Unknown sessions use the mean of all day layers instead of failing.
  bool average_unknown_session = false;

  int input_dim() const { return input_channels * stack_k; }
  int directions() const { return bidirectional ? 2 : 1; }
  int output_dim() const { return hidden * directions(); }
  /// Number of stacked steps for a T-bin signal, or 0 when T < stack_k.
  int stacked_length(int T) const { return T < stack_k ? 0 : (T - stack_k) / stack_s + 1; }
  void validate() const;

  /// Five layers of 1024 units, matching the full-size recipe.
  static FeatureExtractorConfig full_scale(int channels);
};

class SequenceTooShort : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row i concatenates frames [i*s, i*s + k). Throws SequenceTooShort when T < k.
Matrix stack_frames(const Matrix& signal, int k, int s);

/// Gate columns are ordered reset, update, candidate.
struct GruCell {
  Matrix w_ih;  // in × 3H
  Matrix w_hh;  // H × 3H
  Matrix b_ih;  // 1 × 3H
  Matrix b_hh;  // 1 × 3H

  static GruCell create(int in, int hidden, Rng& rng);
  int hidden() const { return static_cast<int>(w_hh.rows()); }
  GruCell zeros_like() const;
  void named_params(const std::string& prefix, ParamRefs& out);
};

struct GruTrace {
  Matrix x;       // T × in
  Matrix h_prev;  // T × H, state entering each step (in processing order)
  Matrix r, z, n, hh_n;
  bool reverse = false;
};

/// Runs one direction over the sequence. Output row t is the state after
/// consuming position t.
Matrix gru_forward(const GruCell& cell, const Matrix& x, bool reverse, GruTrace* trace);
/// Returns dL/dx; accumulates into `grads`.
Matrix gru_backward(const GruCell& cell, const GruTrace& trace, const Matrix& dout, GruCell& grads);

struct ExtractorTrace {
  std::string session;
  bool used_fallback = false;
  Matrix stacked;
  Matrix day_out;
  std::vector<GruTrace> cells;
};

/// Day-specific affine input layers followed by stacked (bi)directional GRUs.
class FeatureExtractor {
 public:
  FeatureExtractorConfig config;
  std::map<std::string, Linear> day_layers;  // session_id → affine map (identity at init)
  std::vector<GruCell> cells;                // layer-major, then direction

  static FeatureExtractor create(const FeatureExtractorConfig& config, const std::vector<std::string>& sessions,
                                 Rng& rng);

  /// `signal` is a preprocessed T×F matrix. Returns Z (T_b × F_b).
  Matrix forward(const Matrix& signal, const std::string& session, ExtractorTrace* trace = nullptr) const;
  /// Forward with no day layer applied (the identity). Used to check the
  /// initialization contract.
  Matrix forward_without_day_layer(const Matrix& signal) const;
  void backward(const ExtractorTrace& trace, const Matrix& dz, FeatureExtractor& grads) const;

  FeatureExtractor zeros_like() const;
  void named_params(const std::string& prefix, ParamRefs& out);

 private:
  Matrix run_gru(Matrix x, ExtractorTrace* trace) const;
};

/// Linear map from features to CTC logits; class 0 is the blank.
struct CtcHead {
  Linear proj;

  static CtcHead create(int feature_dim, int num_classes, Rng& rng);
  int num_classes() const { return proj.out_dim(); }
  CtcHead zeros_like() const { return {proj.zeros_like()}; }
  void named_params(const std::string& prefix, ParamRefs& out) { proj.named_params(prefix + ".proj", out); }
};

class NoValidAlignment : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Frames needed to emit `target`: its length plus one blank per adjacent repeat.
int ctc_min_frames(const LabelSequence& target);

/// Negative log-likelihood of `target` under CTC, from unnormalized logits
/// (T × classes). Writes dL/dlogits when `dlogits` is non-null.
double ctc_loss(const Matrix& logits, const LabelSequence& target, Matrix* dlogits = nullptr);

/// Best-path decoding: argmax per step (ties to the lowest id), collapse
/// repeats, drop blanks.
LabelSequence ctc_greedy_decode(const Matrix& logits);

}  // namespace b2t
