// SPDX-License-Identifier: Apache-2.0
#include "b2t/io.hpp"
#include "b2t/synthgen.hpp"

#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace b2t;
using b2t::testing::TempDir;

namespace {

SynthConfig small() {
  SynthConfig c;
  c.vocab_size = 12;
  c.channels = 6;
  c.train_trials = 20;
  c.test_trials = 8;
  c.sessions = 2;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  TempDir a, b, c;
  const SynthConfig cfg = small();
  generate_dataset(cfg, a.path());
  generate_dataset(cfg, b.path());
  SynthConfig other = cfg;
  other.seed = 10;
  generate_dataset(other, c.path());
  CHECK(io::read_file(a / kManifestFile) == io::read_file(b / kManifestFile));
  const DatasetManifest m = load_manifest(a.path());
  for (const Trial& t : m.trials) CHECK(io::read_file(a / t.signal_path) == io::read_file(b / t.signal_path));
  CHECK(io::read_file(a / kManifestFile) != io::read_file(c / kManifestFile));
}

TEST_CASE("generated corpora satisfy the manifest schema and config") {
  TempDir dir;
  const SynthConfig cfg = small();
  generate_dataset(cfg, dir.path());
  const DatasetManifest m = load_manifest(dir.path(), cfg.channels);
  CHECK(m.trials.size() == 28);
  CHECK(subset(m, Split::train).size() == 20);
  const auto vocab = cfg.resolved_vocab();
  const std::set<std::string> allowed(vocab.begin(), vocab.end());
  std::set<std::string> sessions;
  for (const Trial& t : m.trials) {
    sessions.insert(t.session_id);
    const auto words = normalize_for_eval(t.transcription);
    CHECK(static_cast<int>(words.size()) >= cfg.min_words);
    CHECK(static_cast<int>(words.size()) <= cfg.max_words);
    for (const auto& w : words) CHECK(allowed.count(w) == 1);
  }
  CHECK(sessions.size() == 2);
}

TEST_CASE("rendered trials have one segment per phoneme") {
  const SynthConfig cfg = small();
  const SynthWorld world = SynthWorld::create(cfg);
  Rng rng(5);
  const RenderedTrial r = render_trial("cat", 0, world, cfg, 0.0, rng);
  const auto phones = grapheme_to_phoneme("cat", Lexicon::bundled());
  REQUIRE(r.bins.size() == phones.size());
  int total = 0;
  for (int b : r.bins) {
    CHECK(b >= cfg.min_bins_per_phoneme);
    CHECK(b <= cfg.max_bins_per_phoneme);
    total += b;
  }
  CHECK(r.signal.rows() == total);
  CHECK(r.signal.cols() == cfg.channels);
  // Noise-free frames are the drifted template of their phoneme.
  const SessionDrift& d = world.sessions[0];
  const RowVector expect = d.gain * world.templates.at(phones[0]) + d.offset;
  CHECK((r.signal.row(0) - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("invalid synth configs are rejected") {
  SynthConfig c = small();
  c.min_words = 4;
  c.max_words = 3;
  CHECK_THROWS(c.validate());
  c = small();
  c.sessions = 0;
  CHECK_THROWS(c.validate());
  c = small();
  c.silent_fraction = 1.5;
  CHECK_THROWS(c.validate());
}
