// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: data preparation, the three training stages,
// decoding, evaluation and gradient verification.
#include "b2t/config.hpp"
#include "b2t/io.hpp"
#include "b2t/pipeline.hpp"
#include "b2t/synthgen.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace b2t;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config;
  std::string out;
  std::string from;
  std::optional<std::uint64_t> seed;
  std::string subset = "all";
  std::string precision = "f64";
};

RunConfig load_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (o.seed) c.override_seed(*o.seed);
  return c;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("this command needs --out <directory>");
  fs::create_directories(o.out);
  return o.out;
}

void log_to_file(const fs::path& dir, const std::string& command) {
  auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir / (command + ".log")).string(), false);
  spdlog::default_logger()->sinks().push_back(file);
}

std::optional<Condition> parse_subset(const std::string& s) {
  if (s == "all") return std::nullopt;
  return parse_condition(s);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int cmd_synth(const Options& o) {
  const RunConfig cfg = load_config(o);
  const fs::path out = require_out(o);
  io::DirLock lock(out);
  const DatasetManifest m = generate_dataset(cfg.synth, out);
  std::cout << "wrote " << m.trials.size() << " trials to " << out.string() << "\n";
  return kExitOk;
}

int cmd_validate(const Options& o) {
  const RunConfig cfg = load_config(o);
  std::optional<int> channels;
  if (cfg.dataset.channels > 0) channels = cfg.dataset.channels;
  const DatasetManifest m = load_manifest(cfg.resolve(cfg.dataset.path), channels);
  const ValidationReport r = validate_dataset(m);
  std::cout << r.to_table();
  for (const auto& w : r.warnings) std::cout << "warning: " << w << "\n";
  if (!o.out.empty()) {
    const fs::path out = require_out(o);
    nlohmann::ordered_json j;
    j["total_trials"] = r.total_trials;
    for (const auto& [name, s] : {std::pair<const char*, const ConditionStats*>{"vocal", &r.vocal},
                                  {"silent", &r.silent},
                                  {"all", &r.all}}) {
      j[name] = {{"train_sentences", s->train_sentences},
                 {"test_sentences", s->test_sentences},
                 {"train_unique_words", s->train_unique_words},
                 {"test_unique_words", s->test_unique_words},
                 {"word_overlap", s->word_overlap}};
    }
    j["warnings"] = r.warnings;
    io::write_file_atomic(out / "validation.json", j.dump(2) + "\n");
  }
  return kExitOk;
}

void print_last_metrics(const Checkpoint& c) {
  if (!c.metrics.empty()) std::cout << c.metrics.back().dump() << "\n";
}

int cmd_stage(const Options& o, Stage stage) {
  const RunConfig cfg = load_config(o);
  const fs::path out = require_out(o);
  io::DirLock lock(out);
  log_to_file(out, std::string(to_string(stage)));
  StageIo sio{out, parse_dtype(o.precision), -1};
  std::optional<Checkpoint> prior;
  if (stage == Stage::align) prior = load_prerequisite(o.from, {Stage::pretrain_fe});
  if (stage == Stage::finetune) prior = load_prerequisite(o.from, {Stage::align});
  const Workspace ws = Workspace::open(cfg);
  Checkpoint done;
  switch (stage) {
    case Stage::pretrain_fe:
      done = pipeline_pretrain(ws, sio);
      break;
    case Stage::align:
      done = pipeline_align(ws, *prior, sio);
      break;
    case Stage::finetune:
      done = pipeline_finetune(ws, *prior, sio);
      break;
  }
  print_last_metrics(done);
  return kExitOk;
}

int cmd_decode(const Options& o) {
  const RunConfig cfg = load_config(o);
  const fs::path out = require_out(o);
  io::DirLock lock(out);
  const Checkpoint ckpt = load_prerequisite(o.from, {Stage::align, Stage::finetune});
  const Workspace ws = Workspace::open(cfg);
  const Transcriber transcribe_trial = make_transcriber(ws, ckpt.model, cfg.generation);
  std::string lines;
  for (const Trial& t : subset(ws.manifest, Split::test, parse_subset(o.subset))) {
    nlohmann::ordered_json j;
    j["trial_id"] = t.trial_id;
    try {
      const Transcript r = transcribe_trial(t);
      j["hypothesis"] = r.text;
      j["logprob"] = r.logprob;
      j["truncated"] = r.truncated;
    } catch (const std::exception& e) {
      spdlog::warn("decoding failed for trial {}: {}", t.trial_id, e.what());
      j["hypothesis"] = "";
      j["logprob"] = nullptr;
      j["truncated"] = false;
      j["error"] = e.what();
    }
    lines += j.dump() + "\n";
  }
  io::write_file_atomic(out / "hypotheses.jsonl", lines);
  std::cout << "wrote " << (out / "hypotheses.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = load_config(o);
  const fs::path out = require_out(o);
  io::DirLock lock(out);
  const Checkpoint ckpt = load_prerequisite(o.from, {Stage::finetune});
  const Workspace ws = Workspace::open(cfg);
  const EvalReport report = pipeline_eval(ws, ckpt, parse_subset(o.subset));
  io::write_file_atomic(out / "eval_report.json", report.to_json().dump(2) + "\n");
  io::write_file_atomic(out / "eval_trials.txt", report.to_text());
  std::cout << report.summary_table();
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  const RunConfig cfg = load_config(o);
  const auto results = run_gradient_suite(cfg.seed);
  bool ok = true;
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    const bool pass = r.max_rel_error < 1e-4;
    ok = ok && pass;
    std::cout << r.component << " max_rel_error=" << format_double(r.max_rel_error) << " coords=" << r.coordinates
              << (pass ? " ok" : " FAIL") << "\n";
    j.push_back({{"component", r.component}, {"max_rel_error", r.max_rel_error}, {"coordinates", r.coordinates}});
  }
  if (!o.out.empty()) io::write_file_atomic(require_out(o) / "gradcheck.json", j.dump(2) + "\n");
  if (!ok) throw std::runtime_error("gradient check failed");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("b2t"));
  CLI::App app{"Brain-to-text training and evaluation pipeline"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "TOML run configuration");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--from", o.from, "Prerequisite checkpoint (stage output directory)");
    sub->add_option("--seed", seed, "Overrides every seed in the configuration");
    sub->add_option("--subset", o.subset, "Trial subset")->check(CLI::IsMember({"vocal", "silent", "all"}));
    sub->add_option("--precision", o.precision, "Checkpoint precision")->check(CLI::IsMember({"f32", "f64"}));
  };
  struct Command {
    const char* name;
    const char* help;
    std::function<int()> run;
  };
  const std::vector<Command> commands{
      {"synth", "Generate a synthetic dataset into --out", [&] { return cmd_synth(o); }},
      {"validate", "Check the dataset and print corpus statistics", [&] { return cmd_validate(o); }},
      {"pretrain-fe", "CTC pretraining of the feature extractor", [&] { return cmd_stage(o, Stage::pretrain_fe); }},
      {"align", "Modality alignment with the decoder frozen", [&] { return cmd_stage(o, Stage::align); }},
      {"finetune", "Decoder finetuning with the extractor frozen", [&] { return cmd_stage(o, Stage::finetune); }},
      {"decode", "Write hypotheses for the test split", [&] { return cmd_decode(o); }},
      {"eval", "Score a finetuned checkpoint on the test split", [&] { return cmd_eval(o); }},
      {"gradcheck", "Compare analytic and numerical gradients", [&] { return cmd_gradcheck(o); }},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    if (subs[i]->count("--seed") > 0) o.seed = seed;
    try {
      return commands[i].run();
    } catch (const ConfigError& e) {
      spdlog::error("{}", e.what());
      return kExitValidation;
    } catch (const MissingPrerequisite& e) {
      spdlog::error("{}", e.what());
      return kExitValidation;
    } catch (const DatasetError& e) {
      spdlog::error("{}", e.what());
      return kExitValidation;
    } catch (const CheckpointError& e) {
      spdlog::error("{}", e.what());
      return kExitValidation;
    } catch (const std::invalid_argument& e) {
      spdlog::error("{}", e.what());
      return kExitValidation;
    } catch (const std::exception& e) {
      spdlog::error("{}", e.what());
      return kExitRuntime;
    }
  }
  return kExitValidation;
}
