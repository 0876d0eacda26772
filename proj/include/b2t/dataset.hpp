// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "b2t/tensor.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace b2t {

enum class Split { train, test };
enum class Condition { vocal, silent };

std::string_view to_string(Split s);
std::string_view to_string(Condition c);
Split parse_split(std::string_view s);
Condition parse_condition(std::string_view s);

struct Trial {
  std::string trial_id;
  std::string session_id;
  std::string block_id;
  Split split = Split::train;
  Condition condition = Condition::vocal;
  std::string transcription;
  std::string signal_path;  // relative to the manifest directory
  int T = 0;
  int F = 0;

  bool operator==(const Trial&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A validated corpus: `manifest.jsonl` plus one little-endian float32
/// row-major file per trial. Immutable after load.
struct DatasetManifest {
  std::filesystem::path root;  // directory holding manifest.jsonl
  std::vector<Trial> trials;
  int channel_count = 0;
  double sample_bin_ms = 20.0;

  std::filesystem::path signal_file(const Trial& t) const { return root / t.signal_path; }
};

inline constexpr const char* kManifestFile = "manifest.jsonl";

/// Accepts either the manifest file or its directory. When
/// `expected_channels` is given every trial must declare that F.
DatasetManifest load_manifest(const std::filesystem::path& path, std::optional<int> expected_channels = std::nullopt);

/// Reads one trial's T×F matrix. Throws on I/O failure or non-finite values.
Matrix load_trial_signal(const DatasetManifest& manifest, const Trial& trial);

/// Writes signals as `<trial_id>.f32` and the manifest, replacing any
/// existing manifest atomically. `signals[i]` belongs to `trials[i]`; the
/// trials' T, F and signal_path fields are filled in from the matrices.
void write_dataset(const std::filesystem::path& dir, std::vector<Trial> trials, const std::vector<Matrix>& signals);

/// Serializes one trial as its manifest line (no trailing newline).
std::string trial_to_json_line(const Trial& t);

/// Index view over a manifest. Keeps manifest order; holds no signal data.
class ManifestView {
 public:
  ManifestView(const DatasetManifest& manifest, std::vector<std::size_t> indices)
      : manifest_(&manifest), indices_(std::move(indices)) {}

  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const Trial& operator[](std::size_t i) const { return manifest_->trials[indices_[i]]; }
  const DatasetManifest& manifest() const { return *manifest_; }
  const std::vector<std::size_t>& indices() const { return indices_; }

  auto begin() const { return Iter{this, 0}; }
  auto end() const { return Iter{this, indices_.size()}; }

 private:
  struct Iter {
    const ManifestView* view;
    std::size_t pos;
    const Trial& operator*() const { return (*view)[pos]; }
    Iter& operator++() {
      ++pos;
      return *this;
    }
    bool operator!=(const Iter& o) const { return pos != o.pos; }
  };

  const DatasetManifest* manifest_;
  std::vector<std::size_t> indices_;
};

/// Filters by split and/or condition. Logs a warning on an empty result.
ManifestView subset(const DatasetManifest& manifest, std::optional<Split> split = std::nullopt,
                    std::optional<Condition> condition = std::nullopt);

/// One row of the corpus statistics table.
struct ConditionStats {
  long train_sentences = 0;
  long test_sentences = 0;
  long train_unique_words = 0;
  long test_unique_words = 0;
  /// |test words ∩ train words| / |test words| on normalized unique words.
  double word_overlap = 0.0;
};

struct ValidationReport {
  ConditionStats vocal;
  ConditionStats silent;
  ConditionStats all;
  long total_trials = 0;
  std::vector<std::string> warnings;

  std::string to_table() const;
};

ValidationReport validate_dataset(const DatasetManifest& manifest);

}  // namespace b2t
