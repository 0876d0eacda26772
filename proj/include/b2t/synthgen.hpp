// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/dataset.hpp"
#include "b2t/tensor.hpp"
#include "b2t/textproc.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace b2t {

/// Synthetic phoneme-coded recordings with per-session drift.
struct SynthConfig {
  std::vector<std::string> vocab;  // empty selects default_synth_vocab(vocab_size)
  int vocab_size = 50;
  int min_words = 3;
  int max_words = 6;
  int channels = 32;
  int min_bins_per_phoneme = 3;
  int max_bins_per_phoneme = 6;
  double noise_sigma = 0.3;
  /// Silent trials use noise_sigma * silent_noise_scale.
  double silent_noise_scale = 1.5;
  int sessions = 3;
  double gain_min = 0.8;
  double gain_max = 1.2;
  double offset_std = 0.1;
  int train_trials = 400;
  int test_trials = 50;
  double silent_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<std::string> resolved_vocab() const;
};

/// The first `n` words of a fixed list drawn from the bundled lexicon.
std::vector<std::string> default_synth_vocab(int n);

struct SessionDrift {
  double gain = 1.0;
  RowVector offset;
};

/// Templates and drifts fixed by the config seed.
struct SynthWorld {
  std::map<std::string, RowVector> templates;  // phoneme symbol → F-vector
  std::vector<SessionDrift> sessions;

  static SynthWorld create(const SynthConfig& config);
};

struct RenderedTrial {
  Trial trial;
  Matrix signal;
  std::vector<int> bins;  // per rendered phoneme
};

/// Renders one sentence for a session. `noise_sigma` overrides the
/// config's value (used for silent trials).
RenderedTrial render_trial(const std::string& sentence, int session, const SynthWorld& world,
                           const SynthConfig& config, double noise_sigma, Rng& rng);

/// Writes a complete dataset to `dir` and returns the manifest as written.
DatasetManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& dir);

}  // namespace b2t
