// SPDX-License-Identifier: Apache-2.0
#include "b2t/training.hpp"

#include "b2t/evaluation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace b2t {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::pretrain_fe:
      return "pretrain_fe";
    case Stage::align:
      return "align";
    case Stage::finetune:
      return "finetune";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  if (s == "pretrain_fe") return Stage::pretrain_fe;
  if (s == "align") return Stage::align;
  if (s == "finetune") return Stage::finetune;
  throw std::invalid_argument("unknown stage '" + std::string(s) + "'");
}

StageConfig StageConfig::defaults(Stage stage) {
  StageConfig c;
  c.stage = stage;
  switch (stage) {
    case Stage::pretrain_fe:
      c.epochs = 400;
      c.batch_size = 64;
      c.lr_main = 0.02;
      c.lr_bridge = 0.0;
      c.clip_norm = 0.0;
      break;
    case Stage::align:
      c.epochs = 100;
      c.batch_size = 8;
      c.lr_main = 1e-3;
      c.lr_bridge = 1e-3;
      c.clip_norm = 1.0;
      break;
    case Stage::finetune:
      c.epochs = 200;
      c.batch_size = 8;
      c.lr_main = 5e-5;
      c.lr_bridge = 1e-3;
      c.clip_norm = 1.0;
      break;
  }
  return c;
}

void StageConfig::validate() const {
  const std::string s(to_string(stage));
  if (epochs < 0) throw std::invalid_argument(s + ": epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument(s + ": batch_size must be >= 1");
  if (!(lr_main >= 0) || !(lr_bridge >= 0)) throw std::invalid_argument(s + ": learning rates must be >= 0");
  if (!(weight_decay >= 0)) throw std::invalid_argument(s + ": weight_decay must be >= 0");
  if (warmup_steps < 0) throw std::invalid_argument(s + ": warmup_steps must be >= 0");
  if (lora_rank < 0) throw std::invalid_argument(s + ": lora_rank must be >= 0");
  if (lora_rank > 0 && stage != Stage::finetune) throw std::invalid_argument(s + ": lora_rank applies to finetune only");
  if (!(clip_norm >= 0)) throw std::invalid_argument(s + ": clip_norm must be >= 0");
  if (!(input_token_noise >= 0 && input_token_noise < 1)) {
    throw std::invalid_argument(s + ": input_token_noise must be in [0, 1)");
  }
}

double lr_at(const Schedule& s, long step) {
  if (step < 0 || step > s.total_steps) {
    throw std::out_of_range("schedule step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) +
                            "]");
  }
  if (s.warmup_steps > 0 && step < s.warmup_steps) {
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  if (s.total_steps <= s.warmup_steps) return 0.0;
  return s.peak_lr * static_cast<double>(s.total_steps - step) / static_cast<double>(s.total_steps - s.warmup_steps);
}

namespace {

/// Stage schedule; warmup is capped at half the run so that short runs
/// still reach the peak and decay to zero.
Schedule make_schedule(double peak, long warmup, long total) {
  return {peak, std::min(warmup, total / 2), total};
}

}  // namespace

void adamw_step(const ParamRefs& params, const ParamRefs& grads, AdamState& state, double lr, double weight_decay) {
  if (params.size() != grads.size()) throw std::invalid_argument("adamw_step: params and grads differ in length");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *grads[i].value;
    require_shape(g, params[i].value->rows(), params[i].value->cols(), "gradient of " + params[i].name);
    if (!g.allFinite()) throw NonFiniteGradient("non-finite gradient in " + params[i].name);
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].value;
    const Matrix& g = *grads[i].value;
    auto [mit, m_new] = state.m.try_emplace(params[i].name, zeros_like(p));
    auto [vit, v_new] = state.v.try_emplace(params[i].name, zeros_like(p));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
    if (weight_decay != 0.0) p -= (lr * weight_decay) * p;
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps);
  }
}

double global_norm(const ParamRefs& grads) {
  double sq = 0;
  for (const auto& g : grads) sq += g.value->squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(const ParamRefs& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& g : grads) *g.value *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------

void Model::named_params(ParamRefs& out) {
  fe.named_params("extractor", out);
  if (ctc_head) ctc_head->named_params("ctc_head", out);
  if (bridge) bridge->named_params("bridge", out);
  if (decoder) decoder->named_params("decoder", out);
}

ParamRefs Model::extractor_params() {
  ParamRefs out;
  fe.named_params("extractor", out);
  return out;
}

ParamRefs Model::decoder_params() {
  ParamRefs out;
  if (decoder) decoder->named_params("decoder", out);
  return out;
}

std::map<std::string, std::string> param_hashes(const ParamRefs& params) {
  std::map<std::string, std::string> out;
  for (const auto& p : params) out[p.name] = content_hash(*p.value);
  return out;
}

namespace {

nlohmann::ordered_json to_json(const StageConfig& c) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(to_string(c.stage));
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr_main"] = c.lr_main;
  j["lr_bridge"] = c.lr_bridge;
  j["weight_decay"] = c.weight_decay;
  j["warmup_steps"] = c.warmup_steps;
  j["seed"] = c.seed;
  j["lora_rank"] = c.lora_rank;
  j["lora_targets"] = c.lora_targets;
  j["clip_norm"] = c.clip_norm;
  j["input_token_noise"] = c.input_token_noise;
  j["train_condition"] = c.train_condition ? std::string(to_string(*c.train_condition)) : std::string("all");
  return j;
}

StageConfig stage_config_from_json(const nlohmann::json& j) {
  StageConfig c;
  c.stage = parse_stage(j.at("stage").get<std::string>());
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr_main = j.at("lr_main").get<double>();
  c.lr_bridge = j.at("lr_bridge").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lora_rank = j.at("lora_rank").get<int>();
  c.lora_targets = j.at("lora_targets").get<std::vector<std::string>>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.input_token_noise = j.value("input_token_noise", 0.0);
  const auto cond = j.at("train_condition").get<std::string>();
  if (cond != "all") c.train_condition = parse_condition(cond);
  return c;
}

nlohmann::ordered_json to_json(const FeatureExtractorConfig& c) {
  return {{"input_channels", c.input_channels}, {"num_layers", c.num_layers},
          {"hidden", c.hidden},                 {"bidirectional", c.bidirectional},
          {"stack_k", c.stack_k},               {"stack_s", c.stack_s},
          {"average_unknown_session", c.average_unknown_session}};
}

FeatureExtractorConfig fe_config_from_json(const nlohmann::json& j) {
  FeatureExtractorConfig c;
  c.input_channels = j.at("input_channels").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.bidirectional = j.at("bidirectional").get<bool>();
  c.stack_k = j.at("stack_k").get<int>();
  c.stack_s = j.at("stack_s").get<int>();
  c.average_unknown_session = j.at("average_unknown_session").get<bool>();
  return c;
}

constexpr const char* kTokenizerMerges = "tokenizer/merges.txt";
constexpr const char* kTokenizerVocab = "tokenizer/vocab.json";
constexpr const char* kCtcMerges = "ctc_tokenizer/merges.txt";
constexpr const char* kCtcVocab = "ctc_tokenizer/vocab.json";

void add_optimizer_tensors(const std::string& prefix, const AdamState& s,
                           std::vector<std::pair<std::string, const Matrix*>>& out) {
  for (const auto& [name, m] : s.m) out.emplace_back(prefix + ".m." + name, &m);
  for (const auto& [name, v] : s.v) out.emplace_back(prefix + ".v." + name, &v);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  Model model = ckpt.model;
  ParamRefs refs;
  model.named_params(refs);
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (const auto& p : refs) tensors.emplace_back(p.name, p.value);
  add_optimizer_tensors("optim.main", ckpt.optim_main, tensors);
  add_optimizer_tensors("optim.bridge", ckpt.optim_bridge, tensors);

  nlohmann::ordered_json meta;
  meta["kind"] = "stage";
  meta["stage"] = std::string(to_string(ckpt.stage));
  meta["stage_config"] = to_json(ckpt.config);
  meta["epoch"] = ckpt.epoch;
  meta["step"] = ckpt.step;
  meta["rng_state"] = ckpt.rng_state;
  meta["optim"] = {{"main_t", ckpt.optim_main.t}, {"bridge_t", ckpt.optim_bridge.t}};

  nlohmann::ordered_json m;
  m["extractor"] = to_json(model.fe.config);
  std::vector<std::string> sessions;
  for (const auto& [s, layer] : model.fe.day_layers) sessions.push_back(s);
  m["sessions"] = sessions;
  m["label_mode"] = std::string(to_string(model.labeler.mode));
  m["ctc_head_classes"] = model.ctc_head ? model.ctc_head->num_classes() : 0;
  m["bridge"] = model.bridge.has_value();
  if (model.decoder) {
    m["decoder"] = to_json(model.decoder->config);
    int rank = 0;
    double scale = 0;
    std::vector<std::string> targets;
    if (!model.decoder->blocks.empty()) {
      auto& b = model.decoder->blocks.front();
      for (const char* name : {"q", "k", "v", "o", "fc1", "fc2"}) {
        const Linear* l = b.map(name);
        if (l->has_lora()) {
          targets.emplace_back(name);
          rank = static_cast<int>(l->lora_a.cols());
          scale = l->lora_scale;
        }
      }
    }
    m["lora"] = {{"rank", rank}, {"scale", scale}, {"targets", targets}};
  }
  meta["model"] = m;
  meta["metrics"] = ckpt.metrics;
  meta["run_config"] = ckpt.run_config;

  std::map<std::string, std::string> files;
  if (model.tokenizer) {
    files[kTokenizerMerges] = model.tokenizer->merges_text();
    files[kTokenizerVocab] = model.tokenizer->vocab_text();
  }
  if (model.labeler.bpe) {
    files[kCtcMerges] = model.labeler.bpe->merges_text();
    files[kCtcVocab] = model.labeler.bpe->vocab_text();
  }
  save_tensor_dir(dir, tensors, ckpt.dtype, meta, files);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const TensorDir stored = load_tensor_dir(dir);
  const auto& meta = stored.meta;
  if (meta.value("kind", "") != "stage") throw CheckpointError(dir.string() + " is not a stage checkpoint");
  Checkpoint c;
  c.dtype = stored.dtype;
  c.stage = parse_stage(meta.at("stage").get<std::string>());
  c.config = stage_config_from_json(meta.at("stage_config"));
  c.epoch = meta.at("epoch").get<int>();
  c.step = meta.at("step").get<long>();
  c.rng_state = meta.at("rng_state").get<std::string>();
  for (const auto& e : meta.at("metrics")) c.metrics.push_back(e);
  c.run_config = meta.at("run_config");

  const auto& m = meta.at("model");
  Rng rng(0);
  c.model.fe = FeatureExtractor::create(fe_config_from_json(m.at("extractor")),
                                        m.at("sessions").get<std::vector<std::string>>(), rng);
  c.model.labeler.mode = parse_label_mode(m.at("label_mode").get<std::string>());
  if (stored.files.count(kCtcMerges) != 0) {
    c.model.labeler.bpe = BpeModel::from_text(stored.files.at(kCtcMerges), stored.files.at(kCtcVocab));
  }
  if (stored.files.count(kTokenizerMerges) != 0) {
    c.model.tokenizer = BpeModel::from_text(stored.files.at(kTokenizerMerges), stored.files.at(kTokenizerVocab));
  }
  const int classes = m.at("ctc_head_classes").get<int>();
  if (classes > 0) c.model.ctc_head = CtcHead::create(c.model.fe.config.output_dim(), classes, rng);
  if (m.contains("decoder")) {
    c.model.decoder = Decoder::create(decoder_config_from_json(m.at("decoder")), rng);
    const auto& lora = m.at("lora");
    const int rank = lora.at("rank").get<int>();
    if (rank > 0) {
      c.model.decoder->attach_lora(rank, lora.at("targets").get<std::vector<std::string>>(), rng,
                                   lora.at("scale").get<double>() * rank);
    }
  }
  if (m.at("bridge").get<bool>()) {
    if (!c.model.decoder) throw CheckpointError("checkpoint has a bridge but no decoder");
    c.model.bridge = Bridge::create(c.model.fe.config.output_dim(), c.model.decoder->config.embed_dim, rng);
  }

  ParamRefs refs;
  c.model.named_params(refs);
  TensorDir model_part;
  model_part.dtype = stored.dtype;
  for (const auto& [name, t] : stored.tensors) {
    if (name.rfind("optim.", 0) == 0) {
      for (auto [prefix, state] : {std::pair{std::string("optim.main."), &c.optim_main},
                                   std::pair{std::string("optim.bridge."), &c.optim_bridge}}) {
        if (name.rfind(prefix + "m.", 0) == 0) state->m[name.substr(prefix.size() + 2)] = t;
        if (name.rfind(prefix + "v.", 0) == 0) state->v[name.substr(prefix.size() + 2)] = t;
      }
    } else {
      model_part.tensors.emplace_back(name, t);
    }
  }
  load_params_into(model_part, refs, /*allow_extra=*/false);
  c.optim_main.t = meta.at("optim").at("main_t").get<long>();
  c.optim_bridge.t = meta.at("optim").at("bridge_t").get<long>();
  return c;
}

// ---------------------------------------------------------------------------

ExampleSet build_examples(const ManifestView& trials, const BlockStatsTable& stats,
                          const AugmentationConfig& augmentation, const CtcLabeler* labeler,
                          const BpeModel* tokenizer) {
  ExampleSet set;
  set.augmentation = augmentation;
  set.stats = stats;
  for (const Trial& t : trials) {
    Example ex;
    ex.trial_id = t.trial_id;
    ex.session_id = t.session_id;
    ex.condition = t.condition;
    ex.transcription = t.transcription;
    if (labeler != nullptr) {
      try {
        ex.ctc_target = labeler->build(t.transcription);
      } catch (const std::exception& e) {
        spdlog::warn("dropping trial {}: {}", t.trial_id, e.what());
        continue;
      }
    }
    if (tokenizer != nullptr) {
      ex.tokens = tokenizer->encode(t.transcription);
      ex.tokens.push_back(BpeModel::kEos);
    }
    const auto it = set.stats.find(t.block_id);
    if (it == set.stats.end()) throw DatasetError("no normalization statistics for block " + t.block_id);
    ex.stats = &it->second;
    ex.raw = load_trial_signal(trials.manifest(), t);
    set.examples.push_back(std::move(ex));
  }
  return set;
}

namespace {

void zero_all(const ParamRefs& refs) {
  for (const auto& r : refs) r.value->setZero();
}

void scale_all(const ParamRefs& refs, double s) {
  for (const auto& r : refs) *r.value *= s;
}

void round_all(const ParamRefs& refs) {
  for (const auto& r : refs) round_to_f32(*r.value);
}

void round_state(AdamState& s) {
  for (auto& [n, m] : s.m) round_to_f32(m);
  for (auto& [n, v] : s.v) round_to_f32(v);
}

ParamRefs filter(const ParamRefs& refs, bool lora_only) {
  if (!lora_only) return refs;
  ParamRefs out;
  for (const auto& r : refs) {
    if (r.name.find(".lora_") != std::string::npos) out.push_back(r);
  }
  return out;
}

struct TrainableGroup {
  ParamRefs params;
  ParamRefs grads;
  AdamState* state;
  double peak_lr;
};

using ExampleLoss = std::function<double(const Example&, Rng&)>;
using EpochHook = std::function<void(nlohmann::ordered_json&)>;

std::uint64_t stage_salt(Stage s) { return 0x57a6e000ULL + static_cast<std::uint64_t>(s); }

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw CheckpointError("corrupt rng state");
  return rng;
}

void train_loop(Checkpoint& state, const ExampleSet& train, const RunOptions& options,
                std::vector<TrainableGroup>& groups, const ExampleLoss& example_loss, const EpochHook& epoch_hook) {
  const StageConfig& cfg = state.config;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < train.examples.size(); ++i) {
    if (!cfg.train_condition || train.examples[i].condition == *cfg.train_condition) eligible.push_back(i);
  }
  if (eligible.empty() && cfg.epochs > 0) throw std::invalid_argument("no training trials for this stage");
  const long steps_per_epoch =
      (static_cast<long>(eligible.size()) + cfg.batch_size - 1) / static_cast<long>(cfg.batch_size);
  const long total = steps_per_epoch * cfg.epochs;

  ParamRefs all_grads;
  for (const auto& g : groups) all_grads.insert(all_grads.end(), g.grads.begin(), g.grads.end());

  const std::uint64_t base_seed = mix_seed(cfg.seed, stage_salt(state.stage));
  Rng rng = state.rng_state.empty() ? Rng(base_seed) : rng_from_string(state.rng_state);
  std::set<std::string> warned;

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    if (options.stop_after_epoch >= 0 && epoch >= options.stop_after_epoch) break;
    std::vector<std::size_t> order = eligible;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double loss_sum = 0;
    long used_total = 0;
    long skipped = 0;
    double grad_norm_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      zero_all(all_grads);
      long used = 0;
      for (std::size_t i = start; i < stop; ++i) {
        const Example& ex = train.examples[order[i]];
        Rng trial_rng(mix_seed(base_seed, static_cast<std::uint64_t>(epoch), order[i]));
        try {
          loss_sum += example_loss(ex, trial_rng);
          ++used;
        } catch (const NoValidAlignment& e) {
          ++skipped;
          if (warned.insert(ex.trial_id).second) spdlog::warn("skipping trial {}: {}", ex.trial_id, e.what());
        } catch (const SequenceTooShort& e) {
          ++skipped;
          if (warned.insert(ex.trial_id).second) spdlog::warn("skipping trial {}: {}", ex.trial_id, e.what());
        }
      }
      if (used > 0) {
        scale_all(all_grads, 1.0 / static_cast<double>(used));
        grad_norm_sum += cfg.clip_norm > 0 ? clip_global_norm(all_grads, cfg.clip_norm) : global_norm(all_grads);
        for (auto& g : groups) {
          const double lr = lr_at(make_schedule(g.peak_lr, cfg.warmup_steps, total), state.step);
          adamw_step(g.params, g.grads, *g.state, lr, cfg.weight_decay);
          if (state.dtype == TensorDtype::f32) {
            round_all(g.params);
            round_state(*g.state);
          }
        }
      }
      used_total += used;
      ++state.step;
    }
    nlohmann::ordered_json metrics;
    metrics["stage"] = std::string(to_string(state.stage));
    metrics["epoch"] = epoch + 1;
    metrics["step"] = state.step;
    metrics["train_loss"] = used_total > 0 ? loss_sum / static_cast<double>(used_total) : 0.0;
    metrics["grad_norm"] = steps_per_epoch > 0 ? grad_norm_sum / static_cast<double>(steps_per_epoch) : 0.0;
    metrics["skipped"] = skipped;
    if (epoch_hook) epoch_hook(metrics);
    state.epoch = epoch + 1;
    state.rng_state = rng_to_string(rng);
    spdlog::info("{}", metrics.dump());
    state.metrics.push_back(std::move(metrics));
    if (options.on_epoch) options.on_epoch(state);
  }
  if (state.rng_state.empty()) state.rng_state = rng_to_string(rng);
}

void require_unchanged(const std::map<std::string, std::string>& before, const ParamRefs& params,
                       const std::string& what) {
  if (param_hashes(params) != before) throw std::logic_error(what + " parameters changed during a frozen stage");
}

/// Teacher-forced decoder inputs for `target` where each token is replaced,
/// with probability `p`, by a token drawn from a random training target.
std::vector<int> noisy_inputs(const std::vector<int>& target, double p, const ExampleSet& train, Rng& rng) {
  std::vector<int> in(target.begin(), target.end() - 1);
  std::bernoulli_distribution flip(p);
  std::uniform_int_distribution<std::size_t> pick_example(0, train.examples.size() - 1);
  for (int& id : in) {
    if (!flip(rng)) continue;
    const std::vector<int>& other = train.examples[pick_example(rng)].tokens;
    if (other.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> pick_token(0, other.size() - 2);
    id = other[pick_token(rng)];
  }
  return in;
}

}  // namespace

Checkpoint init_pretrain(const FeatureExtractorConfig& fe_config, const std::vector<std::string>& sessions,
                         CtcLabeler labeler, const StageConfig& config, TensorDtype dtype) {
  config.validate();
  if (config.stage != Stage::pretrain_fe) throw std::invalid_argument("init_pretrain needs a pretrain_fe config");
  Checkpoint c;
  c.stage = Stage::pretrain_fe;
  c.config = config;
  c.dtype = dtype;
  Rng rng(mix_seed(config.seed, 0xfe));
  c.model.fe = FeatureExtractor::create(fe_config, sessions, rng);
  c.model.ctc_head = CtcHead::create(fe_config.output_dim(), labeler.num_classes(), rng);
  c.model.labeler = std::move(labeler);
  if (dtype == TensorDtype::f32) {
    ParamRefs refs;
    c.model.named_params(refs);
    round_all(refs);
  }
  return c;
}

Checkpoint run_pretrain_fe(Checkpoint state, const ExampleSet& train, const RunOptions& options) {
  if (state.stage != Stage::pretrain_fe || !state.model.ctc_head) {
    throw std::invalid_argument("run_pretrain_fe needs a pretrain_fe state");
  }
  state.config.validate();
  Model& model = state.model;
  FeatureExtractor g_fe = model.fe.zeros_like();
  CtcHead g_head = model.ctc_head->zeros_like();

  std::vector<TrainableGroup> groups(1);
  model.named_params(groups[0].params);
  g_fe.named_params("extractor", groups[0].grads);
  g_head.named_params("ctc_head", groups[0].grads);
  groups[0].state = &state.optim_main;
  groups[0].peak_lr = state.config.lr_main;

  const AugmentationConfig aug = train.augmentation;
  auto loss = [&](const Example& ex, Rng& rng) {
    const Matrix view = training_view(ex.raw, *ex.stats, aug, rng);
    ExtractorTrace trace;
    const Matrix z = model.fe.forward(view, ex.session_id, &trace);
    const Matrix logits = model.ctc_head->proj.forward(z);
    Matrix dlogits;
    const double l = ctc_loss(logits, ex.ctc_target, &dlogits);
    const Matrix dz = model.ctc_head->proj.backward(z, dlogits, &g_head.proj);
    model.fe.backward(trace, dz, g_fe);
    return l;
  };
  auto hook = [&](nlohmann::ordered_json& m) {
    if (options.heldout != nullptr && !options.heldout->examples.empty()) m["heldout_per"] = greedy_per(model, *options.heldout);
  };
  train_loop(state, train, options, groups, loss, hook);
  return state;
}

double greedy_per(const Model& model, const ExampleSet& set) {
  if (!model.ctc_head) throw std::invalid_argument("greedy_per needs a CTC head");
  std::vector<SequencePair> pairs;
  for (const Example& ex : set.examples) {
    std::vector<std::string> hyp;
    try {
      const Matrix view = eval_view(ex.raw, *ex.stats, set.augmentation);
      const Matrix logits = model.ctc_head->proj.forward(model.fe.forward(view, ex.session_id));
      hyp = model.labeler.symbols(ctc_greedy_decode(logits));
    } catch (const SequenceTooShort&) {
    }
    pairs.emplace_back(model.labeler.symbols(ex.ctc_target), std::move(hyp));
  }
  return phoneme_error_rate(pairs);
}

void pretrain_decoder_lm(Decoder& decoder, const std::vector<std::vector<int>>& targets,
                         const LmPretrainConfig& config, std::uint64_t seed) {
  if (config.epochs <= 0 || targets.empty()) return;
  if (config.batch_size < 1) throw std::invalid_argument("lm pretraining batch_size must be >= 1");
  if (config.prefix_min < 0 || config.prefix_max < config.prefix_min) {
    throw std::invalid_argument("lm pretraining prefix range is invalid");
  }
  Decoder grads = decoder.zeros_like();
  ParamRefs params, grefs;
  decoder.named_params("decoder", params);
  grads.named_params("decoder", grefs);
  AdamState adam;
  const long steps_per_epoch = (static_cast<long>(targets.size()) + config.batch_size - 1) / config.batch_size;
  const Schedule schedule = make_schedule(config.lr, config.warmup_steps, steps_per_epoch * config.epochs);
  Rng rng(mix_seed(seed, 0x1a));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(targets.size());
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      zero_all(grefs);
      for (std::size_t i = start; i < stop; ++i) {
        std::uniform_int_distribution<int> len(config.prefix_min, config.prefix_max);
        Matrix prefix(len(rng), decoder.config.embed_dim);
        for (Eigen::Index k = 0; k < prefix.size(); ++k) prefix.data()[k] = normal(rng);
        Matrix dprefix;
        loss_sum += decoder.nll(prefix, targets[order[i]], &dprefix, &grads);
      }
      scale_all(grefs, 1.0 / static_cast<double>(stop - start));
      clip_global_norm(grefs, 1.0);
      adamw_step(params, grefs, adam, lr_at(schedule, step), config.weight_decay);
      ++step;
    }
    spdlog::info("{{\"stage\":\"lm_pretrain\",\"epoch\":{},\"train_loss\":{:.6f}}}", epoch + 1,
                 loss_sum / static_cast<double>(targets.size()));
  }
}

Checkpoint begin_alignment(const Checkpoint& fe_ckpt, Decoder decoder, BpeModel tokenizer, const StageConfig& config) {
  config.validate();
  if (config.stage != Stage::align) throw std::invalid_argument("begin_alignment needs an align config");
  if (tokenizer.vocab_size() > decoder.config.vocab_size) {
    throw std::invalid_argument("tokenizer vocabulary (" + std::to_string(tokenizer.vocab_size()) +
                                ") exceeds decoder vocab_size (" + std::to_string(decoder.config.vocab_size) + ")");
  }
  Checkpoint c;
  c.stage = Stage::align;
  c.config = config;
  c.dtype = fe_ckpt.dtype;
  c.run_config = fe_ckpt.run_config;
  c.model.fe = fe_ckpt.model.fe;
  c.model.labeler = fe_ckpt.model.labeler;
  Rng rng(mix_seed(config.seed, 0xb1d6e));
  c.model.bridge = Bridge::create(c.model.fe.config.output_dim(), decoder.config.embed_dim, rng);
  c.model.decoder = std::move(decoder);
  c.model.tokenizer = std::move(tokenizer);
  if (c.dtype == TensorDtype::f32) {
    ParamRefs refs;
    c.model.named_params(refs);
    round_all(refs);
  }
  return c;
}

Checkpoint run_alignment_stage(Checkpoint state, const ExampleSet& train, const RunOptions& options) {
  if (state.stage != Stage::align || !state.model.bridge || !state.model.decoder) {
    throw std::invalid_argument("run_alignment_stage needs an align state");
  }
  state.config.validate();
  Model& model = state.model;
  const auto frozen = param_hashes(model.decoder_params());

  FeatureExtractor g_fe = model.fe.zeros_like();
  Bridge g_bridge = model.bridge->zeros_like();
  std::vector<TrainableGroup> groups(1);
  model.fe.named_params("extractor", groups[0].params);
  model.bridge->named_params("bridge", groups[0].params);
  g_fe.named_params("extractor", groups[0].grads);
  g_bridge.named_params("bridge", groups[0].grads);
  groups[0].state = &state.optim_main;
  groups[0].peak_lr = state.config.lr_main;

  const AugmentationConfig aug = train.augmentation;
  auto loss = [&](const Example& ex, Rng& rng) {
    const Matrix view = training_view(ex.raw, *ex.stats, aug, rng);
    ExtractorTrace trace;
    const Matrix z = model.fe.forward(view, ex.session_id, &trace);
    const Matrix e = model.bridge->project(z);
    Matrix de;
    const double noise = state.config.input_token_noise;
    const std::vector<int> in = noise > 0 ? noisy_inputs(ex.tokens, noise, train, rng) : std::vector<int>{};
    const double l = model.decoder->nll(e, ex.tokens, &de, nullptr, noise > 0 ? &in : nullptr);
    model.fe.backward(trace, model.bridge->backward(z, de, &g_bridge), g_fe);
    return l;
  };
  auto hook = [&](nlohmann::ordered_json& m) {
    if (options.heldout != nullptr && !options.heldout->examples.empty()) m["heldout_nll"] = mean_nll(model, *options.heldout);
  };
  train_loop(state, train, options, groups, loss, hook);
  require_unchanged(frozen, state.model.decoder_params(), "decoder");
  return state;
}

Checkpoint begin_finetune(const Checkpoint& align_ckpt, const StageConfig& config) {
  config.validate();
  if (config.stage != Stage::finetune) throw std::invalid_argument("begin_finetune needs a finetune config");
  if (align_ckpt.stage != Stage::align || !align_ckpt.model.decoder || !align_ckpt.model.bridge) {
    throw std::invalid_argument("finetuning starts from an alignment checkpoint");
  }
  Checkpoint c;
  c.stage = Stage::finetune;
  c.config = config;
  c.dtype = align_ckpt.dtype;
  c.run_config = align_ckpt.run_config;
  c.model = align_ckpt.model;
  if (config.lora_rank > 0) {
    Rng rng(mix_seed(config.seed, 0x10a));
    c.model.decoder->attach_lora(config.lora_rank, config.lora_targets, rng);
    if (c.dtype == TensorDtype::f32) {
      ParamRefs refs;
      c.model.named_params(refs);
      round_all(refs);
    }
  }
  return c;
}

Checkpoint run_finetune_stage(Checkpoint state, const ExampleSet& train, const RunOptions& options) {
  if (state.stage != Stage::finetune || !state.model.bridge || !state.model.decoder) {
    throw std::invalid_argument("run_finetune_stage needs a finetune state");
  }
  state.config.validate();
  Model& model = state.model;
  const auto frozen = param_hashes(model.extractor_params());
  const bool lora = model.decoder->has_lora();

  Decoder g_dec = model.decoder->zeros_like();
  Bridge g_bridge = model.bridge->zeros_like();
  std::vector<TrainableGroup> groups(2);
  ParamRefs dec_params, dec_grads;
  model.decoder->named_params("decoder", dec_params);
  g_dec.named_params("decoder", dec_grads);
  groups[0].params = filter(dec_params, lora);
  groups[0].grads = filter(dec_grads, lora);
  groups[0].state = &state.optim_main;
  groups[0].peak_lr = state.config.lr_main;
  model.bridge->named_params("bridge", groups[1].params);
  g_bridge.named_params("bridge", groups[1].grads);
  groups[1].state = &state.optim_bridge;
  groups[1].peak_lr = state.config.lr_bridge;
  // Gradients of frozen base weights are computed but never applied.
  ParamRefs unused;
  if (lora) {
    for (const auto& g : dec_grads) {
      if (g.name.find(".lora_") == std::string::npos) unused.push_back(g);
    }
  }

  const AugmentationConfig aug = train.augmentation;
  auto loss = [&](const Example& ex, Rng& rng) {
    const Matrix view = training_view(ex.raw, *ex.stats, aug, rng);
    const Matrix z = model.fe.forward(view, ex.session_id);
    const Matrix e = model.bridge->project(z);
    Matrix de;
    const double noise = state.config.input_token_noise;
    const std::vector<int> in = noise > 0 ? noisy_inputs(ex.tokens, noise, train, rng) : std::vector<int>{};
    const double l = model.decoder->nll(e, ex.tokens, &de, &g_dec, noise > 0 ? &in : nullptr);
    model.bridge->backward(z, de, &g_bridge);
    zero_all(unused);
    return l;
  };
  auto hook = [&](nlohmann::ordered_json& m) {
    if (options.heldout != nullptr && !options.heldout->examples.empty()) m["heldout_nll"] = mean_nll(model, *options.heldout);
  };
  train_loop(state, train, options, groups, loss, hook);
  require_unchanged(frozen, state.model.extractor_params(), "extractor");
  return state;
}

double mean_nll(const Model& model, const ExampleSet& set) {
  if (!model.decoder || !model.bridge) throw std::invalid_argument("mean_nll needs a bridge and decoder");
  double sum = 0;
  long n = 0;
  for (const Example& ex : set.examples) {
    try {
      const Matrix view = eval_view(ex.raw, *ex.stats, set.augmentation);
      sum += model.decoder->nll(model.bridge->project(model.fe.forward(view, ex.session_id)), ex.tokens);
      ++n;
    } catch (const SequenceTooShort&) {
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

Transcript transcribe(const Model& model, const Matrix& view, const std::string& session,
                      const GenerationConfig& generation) {
  if (!model.decoder || !model.bridge || !model.tokenizer) {
    throw std::invalid_argument("transcription needs a bridge, decoder and tokenizer");
  }
  const Matrix e = model.bridge->project(model.fe.forward(view, session));
  const GenerationResult r = generate(*model.decoder, e, generation);
  std::vector<int> ids;
  for (int id : r.tokens) {
    if (id >= BpeModel::kNumSpecial && id < model.tokenizer->vocab_size()) ids.push_back(id);
  }
  return {model.tokenizer->decode(ids), r.logprob, r.truncated};
}

}  // namespace b2t
