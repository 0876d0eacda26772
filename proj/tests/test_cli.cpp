// SPDX-License-Identifier: Apache-2.0
#include "b2t/io.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace b2t;
using b2t::testing::TempDir;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(B2T_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTinyToml = R"(seed = 3
[dataset]
path = "data"
channels = 8
[textproc]
decoder_vocab_size = 48
[feature_extractor]
input_channels = 8
num_layers = 1
hidden = 8
stack_k = 2
stack_s = 2
[decoder]
vocab_size = 48
embed_dim = 16
num_layers = 1
num_heads = 2
ff_dim = 32
max_context = 96
lm_epochs = 1
lm_batch_size = 4
lm_prefix_min = 4
lm_prefix_max = 12
[stages.pretrain_fe]
epochs = 2
batch_size = 4
lr_main = 0.005
warmup_steps = 2
[stages.align]
epochs = 2
batch_size = 4
warmup_steps = 2
[stages.finetune]
epochs = 2
batch_size = 4
lr_main = 1e-3
warmup_steps = 2
[generation]
max_new_tokens = 8
[synth]
vocab_size = 10
min_words = 2
max_words = 3
channels = 8
train_trials = 24
test_trials = 6
sessions = 2
)";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("--help") == 0);
  CHECK(run("eval --subset loud") == 1);
  CHECK(run("validate --config /nonexistent/run.toml") == 1);
}

TEST_CASE("the full pipeline runs through the command line") {
  TempDir dir;
  const std::string cfg = (dir / "run.toml").string();
  io::write_file_atomic(cfg, kTinyToml);
  const std::string c = " --config " + cfg;
  const std::string d = dir.path().string();

  CHECK(run("synth" + c + " --out " + d + "/data") == 0);
  CHECK(run("validate" + c + " --out " + d + "/val") == 0);
  CHECK(std::filesystem::exists(dir / "val" / "validation.json"));

  // Stages refuse missing or wrong-kind prerequisites.
  CHECK(run("align" + c + " --out " + d + "/al --from " + d + "/nowhere") == 1);
  CHECK(run("eval" + c + " --out " + d + "/ev --from " + d + "/nowhere") == 1);

  CHECK(run("pretrain-fe" + c + " --out " + d + "/pre") == 0);
  CHECK(std::filesystem::exists(dir / "pre" / "checkpoint" / "manifest.json"));
  CHECK(run("finetune" + c + " --out " + d + "/ft --from " + d + "/pre") == 1);
  CHECK(run("align" + c + " --out " + d + "/al --from " + d + "/pre") == 0);
  CHECK(run("eval" + c + " --out " + d + "/ev --from " + d + "/al") == 1);
  CHECK(run("decode" + c + " --out " + d + "/dec --from " + d + "/al") == 0);
  CHECK(std::filesystem::exists(dir / "dec" / "hypotheses.jsonl"));
  CHECK(run("finetune" + c + " --out " + d + "/ft --from " + d + "/al --precision f32") == 0);
  CHECK(run("eval" + c + " --out " + d + "/ev --from " + d + "/ft --subset vocal") == 0);
  CHECK(std::filesystem::exists(dir / "ev" / "eval_report.json"));
  CHECK(std::filesystem::exists(dir / "ev" / "eval_trials.txt"));

  // A corrupted checkpoint is a validation error.
  const auto tensors = dir / "ft" / "checkpoint" / "tensors";
  REQUIRE(std::filesystem::exists(tensors));
  const auto victim = std::filesystem::directory_iterator(tensors)->path();
  std::string bytes = io::read_file(victim);
  bytes[0] = static_cast<char>(bytes[0] ^ 0x40);
  io::write_file_atomic(victim, bytes);
  CHECK(run("eval" + c + " --out " + d + "/ev2 --from " + d + "/ft") == 1);
}

TEST_CASE("an invalid config is a validation error") {
  TempDir dir;
  io::write_file_atomic(dir / "bad.toml", "[stages.finetune]\nlearning_rate = 1\n");
  CHECK(run("pretrain-fe --config " + (dir / "bad.toml").string() + " --out " + (dir / "o").string()) == 1);
}
