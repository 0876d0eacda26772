// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/bridge.hpp"
#include "b2t/checkpoint.hpp"
#include "b2t/dataset.hpp"
#include "b2t/decoder.hpp"
#include "b2t/evaluation.hpp"
#include "b2t/feature_extractor.hpp"
#include "b2t/preprocessing.hpp"
#include "b2t/textproc.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace b2t {

enum class Stage { pretrain_fe, align, finetune };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

struct StageConfig {
  Stage stage = Stage::pretrain_fe;
  int epochs = 400;
  int batch_size = 64;
  double lr_main = 0.02;
  double lr_bridge = 1e-3;
  double weight_decay = 1e-5;
  int warmup_steps = 400;
  std::uint64_t seed = 0;
  int lora_rank = 0;
  std::vector<std::string> lora_targets{"q", "v"};
  /// Global-norm clipping threshold; 0 disables.
  double clip_norm = 0.0;
  /// Probability of replacing each teacher-forced decoder input token with a
  /// random word-piece during training; 0 disables.
  double input_token_noise = 0.0;
  /// Restricts training to one condition; unset trains on every trial.
  std::optional<Condition> train_condition;

  static StageConfig defaults(Stage stage);
  void validate() const;
};

/// Language-model pretraining of the decoder on the training transcriptions.
struct LmPretrainConfig {
  int epochs = 0;
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int warmup_steps = 100;
  /// Each sequence gets a random-length Gaussian prefix of this many rows
  /// (inclusive range) so that positions used behind a neural prefix are trained.
  int prefix_min = 0;
  int prefix_max = 0;
};

struct Schedule {
  double peak_lr = 0.0;
  long warmup_steps = 400;
  long total_steps = 0;
};

/// Linear warmup from 0 to peak over warmup_steps, then linear decay to 0 at total_steps.
double lr_at(const Schedule& schedule, long step);

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  long t = 0;
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One AdamW update. `grads[i]` belongs to `params[i]`. Decay is decoupled:
/// p ← p − lr·wd·p, then p ← p − lr·m̂/(√v̂ + ε).
void adamw_step(const ParamRefs& params, const ParamRefs& grads, AdamState& state, double lr, double weight_decay);

double global_norm(const ParamRefs& grads);
/// Scales gradients so their global norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(const ParamRefs& grads, double max_norm);

/// Everything a stage reads or writes.
struct Model {
  FeatureExtractor fe;
  std::optional<CtcHead> ctc_head;
  std::optional<Bridge> bridge;
  std::optional<Decoder> decoder;
  CtcLabeler labeler;
  std::optional<BpeModel> tokenizer;  // decoder targets

  void named_params(ParamRefs& out);
  ParamRefs extractor_params();
  ParamRefs decoder_params();
};

/// Stage state persisted between epochs and across commands.
struct Checkpoint {
  Stage stage = Stage::pretrain_fe;
  StageConfig config;
  Model model;
  AdamState optim_main;
  AdamState optim_bridge;
  int epoch = 0;  // completed epochs
  long step = 0;
  std::string rng_state;
  std::vector<nlohmann::ordered_json> metrics;
  nlohmann::ordered_json run_config;
  TensorDtype dtype = TensorDtype::f64;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// SHA-256 of each named parameter group.
std::map<std::string, std::string> param_hashes(const ParamRefs& params);

/// One training or held-out trial with its raw signal and targets.
struct Example {
  std::string trial_id;
  std::string session_id;
  Condition condition = Condition::vocal;
  std::string transcription;
  Matrix raw;
  const BlockStats* stats = nullptr;
  LabelSequence ctc_target;
  std::vector<int> tokens;  // decoder targets ending with eos
};

struct ExampleSet {
  std::vector<Example> examples;
  AugmentationConfig augmentation;
  BlockStatsTable stats;
};

/// Loads signals and builds targets. `labeler` and `tokenizer` are optional;
/// a trial whose CTC target cannot be built is dropped with a warning.
ExampleSet build_examples(const ManifestView& trials, const BlockStatsTable& stats,
                          const AugmentationConfig& augmentation, const CtcLabeler* labeler,
                          const BpeModel* tokenizer);

struct RunOptions {
  /// Stops after this many completed epochs (counted from zero) when ≥ 0;
  /// the schedule still spans the full stage so the run can be resumed.
  int stop_after_epoch = -1;
  std::function<void(const Checkpoint&)> on_epoch;
  const ExampleSet* heldout = nullptr;
};

Checkpoint init_pretrain(const FeatureExtractorConfig& fe_config, const std::vector<std::string>& sessions,
                         CtcLabeler labeler, const StageConfig& config, TensorDtype dtype);
/// CTC pretraining. Resumes when `state.epoch > 0`.
Checkpoint run_pretrain_fe(Checkpoint state, const ExampleSet& train, const RunOptions& options = {});

/// Greedy-decoding PER of the extractor + CTC head over `set` (eval view).
double greedy_per(const Model& model, const ExampleSet& set);

/// Trains the decoder as a plain language model on target token sequences.
void pretrain_decoder_lm(Decoder& decoder, const std::vector<std::vector<int>>& targets,
                         const LmPretrainConfig& config, std::uint64_t seed);

/// Starts the alignment stage: drops the CTC head, adds a fresh bridge.
Checkpoint begin_alignment(const Checkpoint& fe_ckpt, Decoder decoder, BpeModel tokenizer, const StageConfig& config);
/// Trains extractor and bridge against the frozen decoder.
Checkpoint run_alignment_stage(Checkpoint state, const ExampleSet& train, const RunOptions& options = {});

/// Starts finetuning from an alignment checkpoint; attaches LoRA when lora_rank > 0.
Checkpoint begin_finetune(const Checkpoint& align_ckpt, const StageConfig& config);
/// Trains bridge and decoder with the extractor frozen.
Checkpoint run_finetune_stage(Checkpoint state, const ExampleSet& train, const RunOptions& options = {});

/// Mean prefix-conditioned NLL of the model over `set` without augmentation.
double mean_nll(const Model& model, const ExampleSet& set);

/// Decodes one preprocessed signal into text.
Transcript transcribe(const Model& model, const Matrix& view, const std::string& session,
                      const GenerationConfig& generation);

// -- gradient verification --------------------------------------------------

/// Lower bound on the denominator of the relative error, so coordinates
/// whose true gradient is ~0 are judged on absolute error.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckResult {
  std::string component;
  double max_rel_error = 0.0;
  long coordinates = 0;
};

/// Compares analytic gradients with central differences on up to
/// `coords_per_group` random coordinates per parameter group.
/// `loss` must recompute the loss from the current parameter values;
/// `analytic` must fill `grads` (same order as `params`).
GradCheckResult grad_check(const std::string& component, const ParamRefs& params,
                           const std::function<double()>& loss, const std::function<void(const ParamRefs&)>& analytic,
                           const ParamRefs& grads, double eps, int coords_per_group, std::uint64_t seed);

/// Runs the built-in suite (GRU, day layers, CTC, bridge, decoder blocks,
/// LoRA, full prefix NLL path) on small random models.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int coords_per_group = 50);

}  // namespace b2t
