// SPDX-License-Identifier: Apache-2.0
#include "b2t/config.hpp"
#include "b2t/io.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace b2t;

TEST_CASE("an empty document yields the module defaults") {
  const RunConfig c = RunConfig::from_toml("");
  CHECK(c.seed == 0);
  CHECK(c.feature_extractor.num_layers == FeatureExtractorConfig{}.num_layers);
  CHECK(c.pretrain_fe.epochs == StageConfig::defaults(Stage::pretrain_fe).epochs);
  CHECK(c.finetune.lr_main == StageConfig::defaults(Stage::finetune).lr_main);
  CHECK(c.finetune.input_token_noise == 0.0);
  CHECK(c.generation.mode == GenerationConfig::Mode::greedy);
}

TEST_CASE("sections override their fields") {
  const RunConfig c = RunConfig::from_toml(R"(
seed = 9
[dataset]
path = "corpus"
[textproc]
label_mode = "bpe"
[feature_extractor]
bidirectional = true
[decoder]
lm_epochs = 3
[stages.finetune]
input_token_noise = 0.25
lora_rank = 2
lora_targets = ["q", "k"]
train_condition = "silent"
[stages.align]
seed = 44
[generation]
mode = "beam"
beam_size = 3
)",
                                           "/base");
  CHECK(c.seed == 9);
  CHECK(c.resolve(c.dataset.path) == std::filesystem::path("/base/corpus"));
  CHECK(c.resolve("/abs/x") == std::filesystem::path("/abs/x"));
  CHECK(c.textproc.label_mode == LabelMode::bpe);
  CHECK(c.feature_extractor.bidirectional);
  CHECK(c.decoder.lm.epochs == 3);
  CHECK(c.finetune.input_token_noise == 0.25);
  CHECK(c.finetune.lora_rank == 2);
  CHECK(c.finetune.lora_targets == std::vector<std::string>{"q", "k"});
  CHECK(c.finetune.train_condition == Condition::silent);
  CHECK(c.pretrain_fe.seed == 9);
  CHECK(c.align.seed == 44);
  CHECK(c.generation.beam_size == 3);
  CHECK(c.to_json()["stages"]["finetune"]["input_token_noise"] == 0.25);
}

TEST_CASE("seed overrides reach every derived seed") {
  RunConfig c = RunConfig::from_toml("[stages.align]\nseed = 44\n");
  c.override_seed(5);
  CHECK(c.seed == 5);
  CHECK(c.pretrain_fe.seed == 5);
  CHECK(c.align.seed == 5);
  CHECK(c.finetune.seed == 5);
  CHECK(c.synth.seed == 5);
}

TEST_CASE("unknown keys and wrong types are rejected") {
  CHECK_THROWS_WITH_AS(RunConfig::from_toml("colour = 1\n"), "unknown key 'colour' in the top level", ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_toml("[dataset]\npaht = \"x\"\n"), "unknown key 'paht' in [dataset]",
                       ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[stages.warmup]\nepochs = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[feature_extractor]\nhidden = \"wide\"\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[textproc]\nlabel_mode = \"chars\"\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[generation]\nmode = \"sample\"\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("seed = [\n"), ConfigError);
}

TEST_CASE("invalid values are rejected with their section") {
  CHECK_THROWS_AS(RunConfig::from_toml("[stages.finetune]\ninput_token_noise = 1.0\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[stages.align]\nlora_rank = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[decoder]\nembed_dim = 30\nnum_heads = 4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[decoder]\nbos = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[textproc]\ndecoder_vocab_size = 4096\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[feature_extractor]\nstack_k = 2\nstack_s = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_toml("[stages.pretrain_fe]\ntrain_condition = \"loud\"\n"), ConfigError);
}

TEST_CASE("config files resolve paths against their directory") {
  b2t::testing::TempDir dir;
  io::write_file_atomic(dir / "run.toml", "[dataset]\npath = \"data\"\n");
  const RunConfig c = RunConfig::load(dir / "run.toml");
  CHECK(c.resolve(c.dataset.path) == dir / "data");
  CHECK_THROWS_AS(RunConfig::load(dir / "missing.toml"), ConfigError);
}

TEST_CASE("the desk configuration loads") {
  const RunConfig c = RunConfig::load(B2T_DESK_CONFIG);
  CHECK(c.finetune.input_token_noise == 0.3);
  CHECK(c.feature_extractor.stack_s == 2);
  CHECK(c.generation.mode == GenerationConfig::Mode::beam);
}
