// SPDX-License-Identifier: Apache-2.0
#include "b2t/synthgen.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace b2t {

std::vector<std::string> default_synth_vocab(int n) {
  static const std::vector<std::string> words = {
      "i",      "you",    "we",     "they",   "she",     "want",     "need",   "like",  "see",    "help",
      "eat",    "drink",  "water",  "food",   "home",    "good",     "bad",    "big",   "small",  "cat",
      "dog",    "bed",    "day",    "night",  "time",    "now",      "here",   "there", "today",  "family",
      "friend", "please", "thank",  "yes",    "not",     "very",     "more",   "my",    "your",   "and",
      "with",   "open",   "close",  "door",   "book",    "read",     "walk",   "sleep", "happy",  "cold",
      "music",  "phone",  "doctor", "chair",  "table",   "red",      "blue",   "green", "morning", "tomorrow",
      "mother", "father", "sister", "brother",
  };
  if (n < 1 || n > static_cast<int>(words.size())) {
    throw std::invalid_argument("synth vocab_size must be in [1, " + std::to_string(words.size()) + "]");
  }
  return {words.begin(), words.begin() + n};
}

void SynthConfig::validate() const {
  auto req = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("synth config: ") + msg);
  };
  req(min_words >= 1 && max_words >= min_words, "need 1 <= min_words <= max_words");
  req(channels >= 1, "channels must be positive");
  req(min_bins_per_phoneme >= 1 && max_bins_per_phoneme >= min_bins_per_phoneme, "bad bins_per_phoneme range");
  req(noise_sigma >= 0 && silent_noise_scale >= 0, "noise must be non-negative");
  req(sessions >= 1, "sessions must be positive");
  req(gain_min > 0 && gain_max >= gain_min, "bad gain range");
  req(offset_std >= 0, "offset_std must be non-negative");
  req(train_trials >= sessions, "need at least one train trial per session");
  req(test_trials >= 0, "test_trials must be non-negative");
  req(silent_fraction >= 0 && silent_fraction <= 1, "silent_fraction must be in [0,1]");
  if (vocab.empty()) default_synth_vocab(vocab_size);
}

std::vector<std::string> SynthConfig::resolved_vocab() const {
  return vocab.empty() ? default_synth_vocab(vocab_size) : vocab;
}

SynthWorld SynthWorld::create(const SynthConfig& config) {
  Rng rng(mix_seed(config.seed, 0x7e11));
  std::normal_distribution<double> normal(0.0, 1.0);
  SynthWorld w;
  const PhonemeInventory inventory;
  for (const auto& sym : inventory.symbols()) {
    RowVector t(config.channels);
    for (int c = 0; c < config.channels; ++c) t[c] = normal(rng);
    w.templates.emplace(sym, std::move(t));
  }
  std::uniform_real_distribution<double> gain(config.gain_min, config.gain_max);
  for (int s = 0; s < config.sessions; ++s) {
    SessionDrift d;
    d.gain = gain(rng);
    d.offset = RowVector(config.channels);
    for (int c = 0; c < config.channels; ++c) d.offset[c] = config.offset_std * normal(rng);
    w.sessions.push_back(std::move(d));
  }
  return w;
}

RenderedTrial render_trial(const std::string& sentence, int session, const SynthWorld& world,
                           const SynthConfig& config, double noise_sigma, Rng& rng) {
  static const Lexicon lexicon = Lexicon::bundled();
  std::string joined;
  for (const auto& w : normalize_for_eval(sentence)) joined += (joined.empty() ? "" : " ") + w;
  const auto phones = grapheme_to_phoneme(joined, lexicon);
  if (phones.empty()) throw std::invalid_argument("render_trial: empty sentence");
  if (session < 0 || session >= static_cast<int>(world.sessions.size())) {
    throw std::out_of_range("render_trial: session out of range");
  }
  const SessionDrift& drift = world.sessions[static_cast<std::size_t>(session)];

  std::uniform_int_distribution<int> bins_dist(config.min_bins_per_phoneme, config.max_bins_per_phoneme);
  std::normal_distribution<double> normal(0.0, 1.0);
  RenderedTrial out;
  int total = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    out.bins.push_back(bins_dist(rng));
    total += out.bins.back();
  }
  out.signal = Matrix(total, config.channels);
  int row = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const RowVector base = drift.gain * world.templates.at(phones[i]) + drift.offset;
    for (int b = 0; b < out.bins[i]; ++b, ++row) {
      out.signal.row(row) = base;
      if (noise_sigma > 0) {
        for (int c = 0; c < config.channels; ++c) out.signal(row, c) += noise_sigma * normal(rng);
      }
    }
  }
  out.trial.session_id = "s" + std::to_string(session);
  out.trial.block_id = out.trial.session_id;
  out.trial.transcription = sentence;
  out.trial.T = total;
  out.trial.F = config.channels;
  return out;
}

DatasetManifest generate_dataset(const SynthConfig& config, const std::filesystem::path& dir) {
  config.validate();
  const auto vocab = config.resolved_vocab();
  const SynthWorld world = SynthWorld::create(config);
  Rng rng(mix_seed(config.seed, 0x5e47));
  std::uniform_int_distribution<int> len_dist(config.min_words, config.max_words);
  std::uniform_int_distribution<std::size_t> word_dist(0, vocab.size() - 1);

  auto sentence = [&] {
    std::string s;
    const int n = len_dist(rng);
    for (int i = 0; i < n; ++i) {
      if (i > 0) s += ' ';
      s += vocab[word_dist(rng)];
    }
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s + ".";
  };

  std::vector<Trial> trials;
  std::vector<Matrix> signals;
  auto emit = [&](Split split, int count) {
    const int silent = static_cast<int>(std::lround(config.silent_fraction * count));
    for (int i = 0; i < count; ++i) {
      const Condition cond = i >= count - silent ? Condition::silent : Condition::vocal;
      const double sigma = config.noise_sigma * (cond == Condition::silent ? config.silent_noise_scale : 1.0);
      RenderedTrial r = render_trial(sentence(), i % config.sessions, world, config, sigma, rng);
      char id[32];
      std::snprintf(id, sizeof id, "%s_%04d", split == Split::train ? "train" : "test", i);
      r.trial.trial_id = id;
      r.trial.split = split;
      r.trial.condition = cond;
      trials.push_back(std::move(r.trial));
      signals.push_back(std::move(r.signal));
    }
  };
  emit(Split::train, config.train_trials);
  emit(Split::test, config.test_trials);
  write_dataset(dir, trials, signals);
  return load_manifest(dir);
}

}  // namespace b2t
