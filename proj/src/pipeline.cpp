// SPDX-License-Identifier: Apache-2.0
#include "b2t/pipeline.hpp"

#include "b2t/io.hpp"

#include <spdlog/spdlog.h>

#include <set>

namespace b2t {

namespace fs = std::filesystem;

Workspace Workspace::open(const RunConfig& config) {
  Workspace ws;
  ws.config = config;
  const fs::path path = config.resolve(config.dataset.path);
  std::optional<int> channels;
  if (config.dataset.channels > 0) channels = config.dataset.channels;
  ws.manifest = load_manifest(path, channels);
  if (ws.manifest.channel_count != config.feature_extractor.input_channels) {
    throw ConfigError("[feature_extractor] input_channels is " + std::to_string(config.feature_extractor.input_channels) +
                      " but the dataset has " + std::to_string(ws.manifest.channel_count) + " channels");
  }
  ws.stats = load_or_compute_block_stats(ws.manifest);
  return ws;
}

fs::path locate_checkpoint(const fs::path& from) {
  if (from.empty()) throw MissingPrerequisite("this command needs --from <checkpoint directory>");
  if (fs::exists(from / kCheckpointManifest)) return from;
  if (fs::exists(from / kCheckpointDir / kCheckpointManifest)) return from / kCheckpointDir;
  throw MissingPrerequisite("missing prerequisite checkpoint: expected " + (from / kCheckpointDir).string());
}

Checkpoint load_prerequisite(const fs::path& from, const std::vector<Stage>& accepted) {
  const fs::path dir = locate_checkpoint(from);
  Checkpoint c = load_checkpoint(dir);
  bool ok = false;
  std::string names;
  for (Stage s : accepted) {
    ok = ok || s == c.stage;
    names += (names.empty() ? "" : " or ") + std::string(to_string(s));
  }
  if (!ok) {
    throw MissingPrerequisite("checkpoint " + dir.string() + " is from stage " + std::string(to_string(c.stage)) +
                              ", expected " + names);
  }
  if (c.epoch < c.config.epochs) {
    throw MissingPrerequisite("checkpoint " + dir.string() + " is incomplete (" + std::to_string(c.epoch) + "/" +
                              std::to_string(c.config.epochs) + " epochs)");
  }
  return c;
}

std::vector<std::string> training_sessions(const DatasetManifest& manifest) {
  std::set<std::string> s;
  for (const Trial& t : manifest.trials) {
    if (t.split == Split::train) s.insert(t.session_id);
  }
  return {s.begin(), s.end()};
}

CtcLabeler make_labeler(const Workspace& ws) {
  CtcLabeler labeler;
  labeler.mode = ws.config.textproc.label_mode;
  if (!ws.config.textproc.lexicon.empty()) {
    labeler.lexicon.merge(Lexicon::from_file(ws.config.resolve(ws.config.textproc.lexicon)));
  }
  if (labeler.mode == LabelMode::bpe) {
    std::vector<std::string> corpus;
    for (const Trial& t : ws.manifest.trials) {
      if (t.split != Split::train) continue;
      std::string line;
      for (const auto& w : normalize_for_eval(t.transcription)) line += (line.empty() ? "" : " ") + w;
      corpus.push_back(line);
    }
    labeler.bpe = BpeModel::train(corpus, ws.config.textproc.ctc_bpe_vocab_size);
  }
  return labeler;
}

BpeModel train_decoder_tokenizer(const Workspace& ws) {
  std::vector<std::string> corpus;
  for (const Trial& t : ws.manifest.trials) {
    if (t.split == Split::train) corpus.push_back(t.transcription);
  }
  return BpeModel::train(corpus, ws.config.textproc.decoder_vocab_size);
}

namespace {

void write_metrics(const fs::path& out_dir, const Checkpoint& c) {
  std::string text;
  for (const auto& m : c.metrics) text += m.dump() + "\n";
  io::write_file_atomic(out_dir / kMetricsFile, text);
}

RunOptions persistence(const StageIo& io, const ExampleSet* heldout) {
  RunOptions opts;
  opts.stop_after_epoch = io.stop_after_epoch;
  opts.heldout = heldout;
  if (!io.out_dir.empty()) {
    const fs::path out = io.out_dir;
    opts.on_epoch = [out](const Checkpoint& c) {
      save_checkpoint(c, out / kCheckpointDir);
      write_metrics(out, c);
    };
  }
  return opts;
}

/// A partially trained checkpoint of the same stage and settings in the
/// output directory, if any.
std::optional<Checkpoint> resumable(const StageIo& io, Stage stage, const StageConfig& config) {
  if (io.out_dir.empty() || !fs::exists(io.out_dir / kCheckpointDir / kCheckpointManifest)) return std::nullopt;
  Checkpoint c = load_checkpoint(io.out_dir / kCheckpointDir);
  const auto same = [&] {
    const StageConfig& a = c.config;
    return c.stage == stage && a.epochs == config.epochs && a.batch_size == config.batch_size &&
           a.lr_main == config.lr_main && a.lr_bridge == config.lr_bridge && a.weight_decay == config.weight_decay &&
           a.warmup_steps == config.warmup_steps && a.seed == config.seed && a.lora_rank == config.lora_rank &&
           a.lora_targets == config.lora_targets && a.clip_norm == config.clip_norm &&
           a.input_token_noise == config.input_token_noise &&
           a.train_condition == config.train_condition && c.dtype == io.precision;
  };
  if (!same()) {
    spdlog::warn("existing checkpoint in {} has different settings; starting over", io.out_dir.string());
    return std::nullopt;
  }
  spdlog::info("resuming {} at epoch {}/{}", to_string(stage), c.epoch, c.config.epochs);
  return c;
}

void finish(const StageIo& io, const Checkpoint& c) {
  if (io.out_dir.empty()) return;
  save_checkpoint(c, io.out_dir / kCheckpointDir);
  write_metrics(io.out_dir, c);
}

}  // namespace

Checkpoint pipeline_pretrain(const Workspace& ws, const StageIo& io) {
  const StageConfig& cfg = ws.config.pretrain_fe;
  std::optional<Checkpoint> state = resumable(io, Stage::pretrain_fe, cfg);
  if (!state) {
    state = init_pretrain(ws.config.feature_extractor, training_sessions(ws.manifest), make_labeler(ws), cfg,
                          io.precision);
    state->run_config = ws.config.to_json();
  }
  const CtcLabeler& labeler = state->model.labeler;
  const ExampleSet train =
      build_examples(subset(ws.manifest, Split::train), ws.stats, ws.config.preprocessing, &labeler, nullptr);
  const ExampleSet test =
      build_examples(subset(ws.manifest, Split::test), ws.stats, ws.config.preprocessing, &labeler, nullptr);
  Checkpoint done = run_pretrain_fe(std::move(*state), train, persistence(io, &test));
  finish(io, done);
  return done;
}

Checkpoint pipeline_align(const Workspace& ws, const Checkpoint& fe, const StageIo& io) {
  const StageConfig& cfg = ws.config.align;
  std::optional<Checkpoint> state = resumable(io, Stage::align, cfg);
  if (!state) {
    Decoder decoder;
    BpeModel tokenizer;
    if (!ws.config.decoder.pretrained.empty()) {
      const fs::path dir = ws.config.resolve(ws.config.decoder.pretrained);
      decoder = import_pretrained(dir, ws.config.decoder.model);
      const TensorDir stored = load_tensor_dir(dir);
      if (stored.files.count("tokenizer/merges.txt") == 0) {
        throw MissingPrerequisite("pretrained decoder " + dir.string() + " has no tokenizer/merges.txt");
      }
      tokenizer = BpeModel::from_text(stored.files.at("tokenizer/merges.txt"), stored.files.at("tokenizer/vocab.json"));
    } else {
      tokenizer = train_decoder_tokenizer(ws);
      Rng rng(mix_seed(cfg.seed, 0xdec0de));
      decoder = Decoder::create(ws.config.decoder.model, rng);
      std::vector<std::vector<int>> targets;
      for (const Trial& t : ws.manifest.trials) {
        if (t.split != Split::train) continue;
        auto ids = tokenizer.encode(t.transcription);
        ids.push_back(BpeModel::kEos);
        targets.push_back(std::move(ids));
      }
      pretrain_decoder_lm(decoder, targets, ws.config.decoder.lm, cfg.seed);
    }
    if (fe.dtype == TensorDtype::f32 || io.precision == TensorDtype::f32) {
      ParamRefs refs;
      decoder.named_params("decoder", refs);
      for (const auto& r : refs) round_to_f32(*r.value);
    }
    if (!io.out_dir.empty()) {
      fs::create_directories(io.out_dir);
      export_decoder(decoder, io.out_dir / kFrozenDecoderDir, &tokenizer);
    }
    Checkpoint base = fe;
    base.dtype = io.precision;
    state = begin_alignment(base, std::move(decoder), std::move(tokenizer), cfg);
    state->run_config = ws.config.to_json();
  }
  const BpeModel& tok = *state->model.tokenizer;
  const ExampleSet train =
      build_examples(subset(ws.manifest, Split::train), ws.stats, ws.config.preprocessing, nullptr, &tok);
  const ExampleSet test =
      build_examples(subset(ws.manifest, Split::test), ws.stats, ws.config.preprocessing, nullptr, &tok);
  Checkpoint done = run_alignment_stage(std::move(*state), train, persistence(io, &test));
  finish(io, done);
  return done;
}

Checkpoint pipeline_finetune(const Workspace& ws, const Checkpoint& aligned, const StageIo& io) {
  const StageConfig& cfg = ws.config.finetune;
  std::optional<Checkpoint> state = resumable(io, Stage::finetune, cfg);
  if (!state) {
    Checkpoint base = aligned;
    base.dtype = io.precision;
    state = begin_finetune(base, cfg);
    state->run_config = ws.config.to_json();
  }
  const BpeModel& tok = *state->model.tokenizer;
  const ExampleSet train =
      build_examples(subset(ws.manifest, Split::train), ws.stats, ws.config.preprocessing, nullptr, &tok);
  const ExampleSet test =
      build_examples(subset(ws.manifest, Split::test), ws.stats, ws.config.preprocessing, nullptr, &tok);
  Checkpoint done = run_finetune_stage(std::move(*state), train, persistence(io, &test));
  finish(io, done);
  return done;
}

Transcriber make_transcriber(const Workspace& ws, const Model& model, const GenerationConfig& generation) {
  return [&ws, &model, generation](const Trial& t) {
    const auto it = ws.stats.find(t.block_id);
    if (it == ws.stats.end()) throw DatasetError("no normalization statistics for block " + t.block_id);
    const Matrix view = eval_view(load_trial_signal(ws.manifest, t), it->second, ws.config.preprocessing);
    return transcribe(model, view, t.session_id, generation);
  };
}

EvalReport pipeline_eval(const Workspace& ws, const Checkpoint& ckpt, std::optional<Condition> subset_condition,
                         Split split) {
  return evaluate(subset(ws.manifest, split, subset_condition), make_transcriber(ws, ckpt.model, ws.config.generation));
}

}  // namespace b2t
