// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/config.hpp"
#include "b2t/dataset.hpp"
#include "b2t/evaluation.hpp"
#include "b2t/preprocessing.hpp"
#include "b2t/training.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace b2t {

inline constexpr const char* kCheckpointDir = "checkpoint";
inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kFrozenDecoderDir = "decoder_init";

/// A stage was asked to start from a checkpoint that does not exist or is
/// of the wrong kind.
class MissingPrerequisite : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Config plus the loaded corpus and its normalization statistics.
struct Workspace {
  RunConfig config;
  DatasetManifest manifest;
  BlockStatsTable stats;

  static Workspace open(const RunConfig& config);
};

/// Where a stage writes and how. An empty `out_dir` keeps everything in memory.
struct StageIo {
  std::filesystem::path out_dir;
  TensorDtype precision = TensorDtype::f64;
  int stop_after_epoch = -1;
};

/// Accepts a checkpoint directory or a stage output directory holding one.
/// Throws MissingPrerequisite naming the expected path.
std::filesystem::path locate_checkpoint(const std::filesystem::path& from);
/// Loads and checks the stage of a prerequisite checkpoint.
Checkpoint load_prerequisite(const std::filesystem::path& from, const std::vector<Stage>& accepted);

CtcLabeler make_labeler(const Workspace& ws);
BpeModel train_decoder_tokenizer(const Workspace& ws);
std::vector<std::string> training_sessions(const DatasetManifest& manifest);

Checkpoint pipeline_pretrain(const Workspace& ws, const StageIo& io);
Checkpoint pipeline_align(const Workspace& ws, const Checkpoint& fe, const StageIo& io);
Checkpoint pipeline_finetune(const Workspace& ws, const Checkpoint& aligned, const StageIo& io);

/// Transcriber over the eval view of each trial.
Transcriber make_transcriber(const Workspace& ws, const Model& model, const GenerationConfig& generation);
EvalReport pipeline_eval(const Workspace& ws, const Checkpoint& ckpt, std::optional<Condition> subset_condition,
                         Split split = Split::test);

}  // namespace b2t
