// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/decoder.hpp"
#include "b2t/feature_extractor.hpp"
#include "b2t/preprocessing.hpp"
#include "b2t/synthgen.hpp"
#include "b2t/textproc.hpp"
#include "b2t/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace b2t {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DatasetSection {
  std::string path = "data";
  int channels = 0;  // 0 accepts whatever the manifest declares
};

struct TextprocSection {
  LabelMode label_mode = LabelMode::phoneme;
  int ctc_bpe_vocab_size = 256;
  int decoder_vocab_size = 256;
  std::string lexicon;  // optional CMU-format file merged over the bundled lexicon
};

struct DecoderSection {
  DecoderConfig model;
  std::string pretrained;  // directory written by export_decoder
  LmPretrainConfig lm;
};

/// The single TOML run document. Every field defaults to its module's default.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // relative paths resolve against this
  DatasetSection dataset;
  AugmentationConfig preprocessing;
  TextprocSection textproc;
  FeatureExtractorConfig feature_extractor;
  DecoderSection decoder;
  StageConfig pretrain_fe = StageConfig::defaults(Stage::pretrain_fe);
  StageConfig align = StageConfig::defaults(Stage::align);
  StageConfig finetune = StageConfig::defaults(Stage::finetune);
  GenerationConfig generation;
  SynthConfig synth;

  static RunConfig from_toml(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& file);

  /// Replaces the top-level seed and every seed derived from it.
  void override_seed(std::uint64_t seed);
  const StageConfig& stage(Stage s) const;
  std::filesystem::path resolve(const std::string& path) const;
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

}  // namespace b2t
