// SPDX-License-Identifier: Apache-2.0
#include "b2t/config.hpp"

#include "b2t/io.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <set>
#include <sstream>

namespace b2t {

namespace {

/// Reads typed keys from one table and rejects anything it was not asked about.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool present() const { return table_ != nullptr; }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (table_ == nullptr) return;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!node->is_boolean()) fail(key, "a boolean");
      out = node->as_boolean()->get();
    } else if constexpr (std::is_integral_v<T>) {
      if (!node->is_integer()) fail(key, "an integer");
      const std::int64_t v = node->as_integer()->get();
      if constexpr (std::is_unsigned_v<T>) {
        if (v < 0) fail(key, "a non-negative integer");
      }
      out = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (node->is_integer()) {
        out = static_cast<T>(node->as_integer()->get());
      } else if (node->is_floating_point()) {
        out = static_cast<T>(node->as_floating_point()->get());
      } else {
        fail(key, "a number");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!node->is_string()) fail(key, "a string");
      out = node->as_string()->get();
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      const toml::array* arr = node->as_array();
      if (arr == nullptr) fail(key, "an array of strings");
      out.clear();
      for (const auto& el : *arr) {
        if (!el.is_string()) fail(key, "an array of strings");
        out.push_back(el.as_string()->get());
      }
    }
  }

  bool has(const char* key) const { return table_ != nullptr && table_->get(key) != nullptr; }

  void finish(const std::set<std::string>& subtables = {}) const {
    if (table_ == nullptr) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (seen_.count(key) == 0 && subtables.count(key) == 0) {
        throw ConfigError("unknown key '" + key + "' in " + where());
      }
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("'" + std::string(key) + "' in " + where() + " must be " + what);
  }
  std::string where() const { return name_.empty() ? "the top level" : "[" + name_ + "]"; }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

const toml::table* subtable(const toml::table& parent, const char* key, const std::string& name) {
  const toml::node* n = parent.get(key);
  if (n == nullptr) return nullptr;
  if (!n->is_table()) throw ConfigError("'" + name + "' must be a table");
  return n->as_table();
}

void read_stage(const toml::table* t, const std::string& name, StageConfig& c, bool& seed_set) {
  Section s(t, name);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("lr_main", c.lr_main);
  s.get("lr_bridge", c.lr_bridge);
  s.get("weight_decay", c.weight_decay);
  s.get("warmup_steps", c.warmup_steps);
  seed_set = s.has("seed");
  s.get("seed", c.seed);
  s.get("lora_rank", c.lora_rank);
  s.get("lora_targets", c.lora_targets);
  s.get("clip_norm", c.clip_norm);
  s.get("input_token_noise", c.input_token_noise);
  std::string cond = c.train_condition ? std::string(to_string(*c.train_condition)) : "all";
  s.get("train_condition", cond);
  if (cond == "all") {
    c.train_condition.reset();
  } else {
    try {
      c.train_condition = parse_condition(cond);
    } catch (const std::exception&) {
      throw ConfigError("train_condition in [" + name + "] must be vocal, silent or all");
    }
  }
  s.finish();
}

nlohmann::ordered_json stage_json(const StageConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_main", c.lr_main},
          {"lr_bridge", c.lr_bridge},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps},
          {"seed", c.seed},
          {"lora_rank", c.lora_rank},
          {"lora_targets", c.lora_targets},
          {"clip_norm", c.clip_norm},
          {"input_token_noise", c.input_token_noise},
          {"train_condition", c.train_condition ? std::string(to_string(*c.train_condition)) : "all"}};
}

}  // namespace

RunConfig RunConfig::from_toml(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config is not valid TOML: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(os.str());
  }

  RunConfig c;
  c.base_dir = base_dir;
  Section top(&root, "");
  top.get("seed", c.seed);
  top.finish({"dataset", "preprocessing", "textproc", "feature_extractor", "decoder", "stages", "generation", "synth"});

  {
    Section s(subtable(root, "dataset", "dataset"), "dataset");
    s.get("path", c.dataset.path);
    s.get("channels", c.dataset.channels);
    s.finish();
  }
  {
    Section s(subtable(root, "preprocessing", "preprocessing"), "preprocessing");
    s.get("sigma_element", c.preprocessing.sigma_element);
    s.get("sigma_channel", c.preprocessing.sigma_channel);
    s.get("smooth_sigma", c.preprocessing.smooth_sigma);
    s.get("smooth_radius", c.preprocessing.smooth_radius);
    s.finish();
  }
  {
    Section s(subtable(root, "textproc", "textproc"), "textproc");
    std::string mode(to_string(c.textproc.label_mode));
    s.get("label_mode", mode);
    try {
      c.textproc.label_mode = parse_label_mode(mode);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("[textproc] ") + e.what());
    }
    s.get("ctc_bpe_vocab_size", c.textproc.ctc_bpe_vocab_size);
    s.get("decoder_vocab_size", c.textproc.decoder_vocab_size);
    s.get("lexicon", c.textproc.lexicon);
    s.finish();
  }
  {
    Section s(subtable(root, "feature_extractor", "feature_extractor"), "feature_extractor");
    auto& f = c.feature_extractor;
    s.get("input_channels", f.input_channels);
    s.get("num_layers", f.num_layers);
    s.get("hidden", f.hidden);
    s.get("bidirectional", f.bidirectional);
    s.get("stack_k", f.stack_k);
    s.get("stack_s", f.stack_s);
    s.get("average_unknown_session", f.average_unknown_session);
    s.finish();
  }
  {
    Section s(subtable(root, "decoder", "decoder"), "decoder");
    auto& d = c.decoder.model;
    s.get("vocab_size", d.vocab_size);
    s.get("embed_dim", d.embed_dim);
    s.get("num_layers", d.num_layers);
    s.get("num_heads", d.num_heads);
    s.get("ff_dim", d.ff_dim);
    s.get("max_context", d.max_context);
    s.get("bos", d.bos);
    s.get("eos", d.eos);
    s.get("pad", d.pad);
    s.get("pretrained", c.decoder.pretrained);
    auto& lm = c.decoder.lm;
    s.get("lm_epochs", lm.epochs);
    s.get("lm_batch_size", lm.batch_size);
    s.get("lm_lr", lm.lr);
    s.get("lm_weight_decay", lm.weight_decay);
    s.get("lm_warmup_steps", lm.warmup_steps);
    s.get("lm_prefix_min", lm.prefix_min);
    s.get("lm_prefix_max", lm.prefix_max);
    s.finish();
  }
  bool seeded[3] = {false, false, false};
  {
    const toml::table* stages = subtable(root, "stages", "stages");
    Section s(stages, "stages");
    s.finish({"pretrain_fe", "align", "finetune"});
    if (stages != nullptr) {
      read_stage(subtable(*stages, "pretrain_fe", "stages.pretrain_fe"), "stages.pretrain_fe", c.pretrain_fe,
                 seeded[0]);
      read_stage(subtable(*stages, "align", "stages.align"), "stages.align", c.align, seeded[1]);
      read_stage(subtable(*stages, "finetune", "stages.finetune"), "stages.finetune", c.finetune, seeded[2]);
    }
  }
  if (!seeded[0]) c.pretrain_fe.seed = c.seed;
  if (!seeded[1]) c.align.seed = c.seed;
  if (!seeded[2]) c.finetune.seed = c.seed;
  {
    Section s(subtable(root, "generation", "generation"), "generation");
    std::string mode = c.generation.mode == GenerationConfig::Mode::greedy ? "greedy" : "beam";
    s.get("mode", mode);
    if (mode == "greedy") {
      c.generation.mode = GenerationConfig::Mode::greedy;
    } else if (mode == "beam") {
      c.generation.mode = GenerationConfig::Mode::beam;
    } else {
      throw ConfigError("[generation] mode must be greedy or beam");
    }
    s.get("beam_size", c.generation.beam_size);
    s.get("max_new_tokens", c.generation.max_new_tokens);
    s.get("length_penalty", c.generation.length_penalty);
    s.finish();
  }
  {
    Section s(subtable(root, "synth", "synth"), "synth");
    auto& y = c.synth;
    s.get("vocab", y.vocab);
    s.get("vocab_size", y.vocab_size);
    s.get("min_words", y.min_words);
    s.get("max_words", y.max_words);
    s.get("channels", y.channels);
    s.get("min_bins_per_phoneme", y.min_bins_per_phoneme);
    s.get("max_bins_per_phoneme", y.max_bins_per_phoneme);
    s.get("noise_sigma", y.noise_sigma);
    s.get("silent_noise_scale", y.silent_noise_scale);
    s.get("sessions", y.sessions);
    s.get("gain_min", y.gain_min);
    s.get("gain_max", y.gain_max);
    s.get("offset_std", y.offset_std);
    s.get("train_trials", y.train_trials);
    s.get("test_trials", y.test_trials);
    s.get("silent_fraction", y.silent_fraction);
    s.get("seed", y.seed);
    s.finish();
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw ConfigError("config file not found: " + file.string());
  return from_toml(io::read_file(file), std::filesystem::absolute(file).parent_path());
}

void RunConfig::override_seed(std::uint64_t s) {
  seed = s;
  pretrain_fe.seed = s;
  align.seed = s;
  finetune.seed = s;
  synth.seed = s;
}

const StageConfig& RunConfig::stage(Stage s) const {
  switch (s) {
    case Stage::pretrain_fe:
      return pretrain_fe;
    case Stage::align:
      return align;
    case Stage::finetune:
      return finetune;
  }
  return pretrain_fe;
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

void RunConfig::validate() const {
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[") + section + "] " + e.what());
    }
  };
  if (dataset.channels < 0) throw ConfigError("[dataset] channels must be >= 0");
  wrap("preprocessing", [&] { preprocessing.validate(); });
  wrap("feature_extractor", [&] { feature_extractor.validate(); });
  wrap("decoder", [&] { decoder.model.validate(); });
  wrap("stages.pretrain_fe", [&] { pretrain_fe.validate(); });
  wrap("stages.align", [&] { align.validate(); });
  wrap("stages.finetune", [&] { finetune.validate(); });
  wrap("generation", [&] { generation.validate(); });
  wrap("synth", [&] { synth.validate(); });
  if (textproc.ctc_bpe_vocab_size <= BpeModel::kNumSpecial || textproc.decoder_vocab_size <= BpeModel::kNumSpecial) {
    throw ConfigError("[textproc] BPE vocab sizes must exceed the special-token count");
  }
  if (textproc.decoder_vocab_size > decoder.model.vocab_size) {
    throw ConfigError("[textproc] decoder_vocab_size exceeds [decoder] vocab_size");
  }
  if (decoder.model.bos != BpeModel::kBos || decoder.model.eos != BpeModel::kEos || decoder.model.pad != BpeModel::kPad) {
    throw ConfigError("[decoder] special ids must match the tokenizer (pad 0, bos 1, eos 2)");
  }
  const auto& lm = decoder.lm;
  if (lm.epochs < 0 || lm.batch_size < 1 || !(lm.lr >= 0) || !(lm.weight_decay >= 0) || lm.warmup_steps < 0 ||
      lm.prefix_min < 0 || lm.prefix_max < lm.prefix_min) {
    throw ConfigError("[decoder] invalid lm pretraining settings");
  }
  if (pretrain_fe.stage != Stage::pretrain_fe || align.stage != Stage::align || finetune.stage != Stage::finetune) {
    throw ConfigError("stage configs are mislabeled");
  }
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["dataset"] = {{"path", dataset.path}, {"channels", dataset.channels}};
  j["preprocessing"] = {{"sigma_element", preprocessing.sigma_element},
                        {"sigma_channel", preprocessing.sigma_channel},
                        {"smooth_sigma", preprocessing.smooth_sigma},
                        {"smooth_radius", preprocessing.smooth_radius}};
  j["textproc"] = {{"label_mode", std::string(to_string(textproc.label_mode))},
                   {"ctc_bpe_vocab_size", textproc.ctc_bpe_vocab_size},
                   {"decoder_vocab_size", textproc.decoder_vocab_size},
                   {"lexicon", textproc.lexicon}};
  const auto& f = feature_extractor;
  j["feature_extractor"] = {{"input_channels", f.input_channels}, {"num_layers", f.num_layers},
                            {"hidden", f.hidden},                 {"bidirectional", f.bidirectional},
                            {"stack_k", f.stack_k},               {"stack_s", f.stack_s},
                            {"average_unknown_session", f.average_unknown_session}};
  nlohmann::ordered_json d = b2t::to_json(decoder.model);
  d["pretrained"] = decoder.pretrained;
  d["lm_epochs"] = decoder.lm.epochs;
  d["lm_batch_size"] = decoder.lm.batch_size;
  d["lm_lr"] = decoder.lm.lr;
  d["lm_weight_decay"] = decoder.lm.weight_decay;
  d["lm_warmup_steps"] = decoder.lm.warmup_steps;
  d["lm_prefix_min"] = decoder.lm.prefix_min;
  d["lm_prefix_max"] = decoder.lm.prefix_max;
  j["decoder"] = d;
  j["stages"] = {{"pretrain_fe", stage_json(pretrain_fe)},
                 {"align", stage_json(align)},
                 {"finetune", stage_json(finetune)}};
  j["generation"] = {{"mode", generation.mode == GenerationConfig::Mode::greedy ? "greedy" : "beam"},
                     {"beam_size", generation.beam_size},
                     {"max_new_tokens", generation.max_new_tokens},
                     {"length_penalty", generation.length_penalty}};
  const auto& y = synth;
  j["synth"] = {{"vocab", y.vocab},
                {"vocab_size", y.vocab_size},
                {"min_words", y.min_words},
                {"max_words", y.max_words},
                {"channels", y.channels},
                {"min_bins_per_phoneme", y.min_bins_per_phoneme},
                {"max_bins_per_phoneme", y.max_bins_per_phoneme},
                {"noise_sigma", y.noise_sigma},
                {"silent_noise_scale", y.silent_noise_scale},
                {"sessions", y.sessions},
                {"gain_min", y.gain_min},
                {"gain_max", y.gain_max},
                {"offset_std", y.offset_std},
                {"train_trials", y.train_trials},
                {"test_trials", y.test_trials},
                {"silent_fraction", y.silent_fraction},
                {"seed", y.seed}};
  return j;
}

}  // namespace b2t
