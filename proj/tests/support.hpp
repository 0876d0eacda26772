// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests and the acceptance binary.
#pragma once

#include "b2t/config.hpp"
#include "b2t/pipeline.hpp"
#include "b2t/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace b2t::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "b2t") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A configuration small enough for a full three-stage run in seconds.
inline RunConfig tiny_config(const std::filesystem::path& data_dir, std::uint64_t seed = 3) {
  RunConfig c;
  c.dataset.path = data_dir.string();
  c.dataset.channels = 8;

  c.synth.vocab_size = 10;
  c.synth.min_words = 2;
  c.synth.max_words = 3;
  c.synth.channels = 8;
  c.synth.train_trials = 24;
  c.synth.test_trials = 6;
  c.synth.sessions = 2;

  c.textproc.decoder_vocab_size = 48;

  c.feature_extractor.input_channels = 8;
  c.feature_extractor.num_layers = 1;
  c.feature_extractor.hidden = 8;
  c.feature_extractor.stack_k = 2;
  c.feature_extractor.stack_s = 2;

  c.decoder.model.vocab_size = 48;
  c.decoder.model.embed_dim = 16;
  c.decoder.model.num_layers = 1;
  c.decoder.model.num_heads = 2;
  c.decoder.model.ff_dim = 32;
  c.decoder.model.max_context = 96;
  c.decoder.lm.epochs = 1;
  c.decoder.lm.batch_size = 4;
  c.decoder.lm.prefix_min = 4;
  c.decoder.lm.prefix_max = 12;

  for (StageConfig* s : {&c.pretrain_fe, &c.align, &c.finetune}) {
    s->epochs = 2;
    s->batch_size = 4;
    s->warmup_steps = 2;
  }
  c.pretrain_fe.lr_main = 0.005;
  c.finetune.lr_main = 1e-3;

  c.generation.mode = GenerationConfig::Mode::greedy;
  c.generation.max_new_tokens = 8;
  c.override_seed(seed);
  c.validate();
  return c;
}

/// Generates the configured synthetic corpus into the config's dataset path.
inline void write_synth_corpus(const RunConfig& c) { generate_dataset(c.synth, c.resolve(c.dataset.path)); }

/// Row-wise softmax computed independently of the library.
inline std::vector<std::vector<double>> softmax_rows(const Matrix& logits) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits(t, c));
    double z = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(t, c) - mx);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) out[t].push_back(std::exp(logits(t, c) - mx) / z);
  }
  return out;
}

/// Probability of `target` under CTC by enumerating every frame-level path
/// (classes^T of them), collapsing repeats and removing blank 0.
inline double ctc_brute_force_probability(const Matrix& logits, const std::vector<int>& target) {
  const auto probs = softmax_rows(logits);
  const int T = static_cast<int>(logits.rows());
  const int C = static_cast<int>(logits.cols());
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  double total = 0;
  long count = 1;
  for (int t = 0; t < T; ++t) count *= C;
  for (long code = 0; code < count; ++code) {
    long rest = code;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rest % C);
      rest /= C;
    }
    std::vector<int> collapsed;
    for (int t = 0; t < T; ++t) {
      if (path[t] != 0 && (t == 0 || path[t] != path[t - 1])) collapsed.push_back(path[t]);
    }
    if (collapsed != target) continue;
    double p = 1;
    for (int t = 0; t < T; ++t) p *= probs[t][path[t]];
    total += p;
  }
  return total;
}

/// Minimum edit cost found by walking every alignment path (match or
/// substitute, delete, insert) without memoization.
inline long exhaustive_edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                                     std::size_t i = 0, std::size_t j = 0) {
  if (i == ref.size()) return static_cast<long>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<long>(ref.size() - i);
  const long diag = (ref[i] == hyp[j] ? 0 : 1) + exhaustive_edit_distance(ref, hyp, i + 1, j + 1);
  const long del = 1 + exhaustive_edit_distance(ref, hyp, i + 1, j);
  const long ins = 1 + exhaustive_edit_distance(ref, hyp, i, j + 1);
  return std::min({diag, del, ins});
}

/// Central-difference gradient of `loss` with respect to every entry of `x`.
inline Matrix numeric_gradient(Matrix& x, const std::function<double()>& loss, double eps = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + eps;
    const double up = loss();
    x.data()[i] = keep - eps;
    const double down = loss();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * eps);
  }
  return g;
}

/// Largest |a - b| / max(|a|, |b|, floor) over the entries.
inline double max_rel_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.data()[i] - b.data()[i]);
    worst = std::max(worst, d / std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), floor}));
  }
  return worst;
}

/// Every parameter of `model` hashed, keyed by name.
inline std::map<std::string, std::string> model_hashes(Model& model) {
  ParamRefs refs;
  model.named_params(refs);
  return param_hashes(refs);
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace b2t::testing
